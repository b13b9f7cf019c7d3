#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "drocal/newsvendor.hpp"
#include "drocal/solver.hpp"

#include <Eigen/Core>

#include <cmath>
#include <random>

using namespace drocal;
using newsvendor::NewsvendorSpec;

TEST_CASE("sample_demand: exponential mean by the law of large numbers") {
  auto spec = newsvendor::single_item_spec();
  auto z = newsvendor::sample_demand(spec, 1000000, 12);
  CHECK(std::abs(z.col(0).mean() - 10.0) <= 3.0 * (10.0 / 1000.0));
  CHECK(z.minCoeff() >= 0.0);
}

TEST_CASE("sample_demand: exchangeable correlation is honored") {
  const Eigen::Index n = 100000;
  const double band = 3.0 / std::sqrt(static_cast<double>(n));
  for (double r : {0.0, 0.6}) {
    auto spec = newsvendor::multi_item_spec(4, r, Eigen::VectorXd::Constant(2, 1.0));
    auto z = newsvendor::sample_demand(spec, n, 99);
    for (int a = 0; a < 4; ++a) {
      CHECK(std::abs(z.col(a).mean() - 10.0) <= 3.0 * 3.0 / std::sqrt(static_cast<double>(n)));
      for (int b = a + 1; b < 4; ++b) {
        const double ca = (z.col(a).array() - z.col(a).mean()).matrix().dot(
                              (z.col(b).array() - z.col(b).mean()).matrix()) /
                          static_cast<double>(n);
        const double corr = ca / (z.col(a).array() - z.col(a).mean()).matrix().norm() /
                            (z.col(b).array() - z.col(b).mean()).matrix().norm() *
                            static_cast<double>(n);
        CHECK(std::abs(corr - r) <= band + 0.01);
      }
    }
  }
}

TEST_CASE("sample_demand: deterministic per seed") {
  auto spec = newsvendor::multi_item_spec(4, 0.6, Eigen::VectorXd::Constant(2, 1.0));
  auto a = newsvendor::sample_demand(spec, 100, 5);
  auto b = newsvendor::sample_demand(spec, 100, 5);
  CHECK(a == b);
}

TEST_CASE("objective_samples: zero stock, hand value, closed-form mean") {
  auto spec = newsvendor::single_item_spec();
  auto z = newsvendor::sample_demand(spec, 200, 3);
  CHECK(newsvendor::objective_samples(spec, Eigen::VectorXd::Zero(1), z).cwiseAbs().maxCoeff() ==
        0.0);

  Eigen::MatrixXd one(1, 1);
  one << 10.0;
  Eigen::VectorXd th(1);
  th << 5.0;
  CHECK(newsvendor::objective_samples(spec, th, one)(0) == doctest::Approx(-5.0));

  // Large-n average against c theta - p m (1 - e^{-theta/m}).
  auto big = newsvendor::sample_demand(spec, 400000, 17);
  th << 8.0;
  const double expect = 1.0 * 8.0 - 2.0 * 10.0 * (1.0 - std::exp(-0.8));
  CHECK(newsvendor::objective_samples(spec, th, big).mean() ==
        doctest::Approx(expect).epsilon(0.01));
}

TEST_CASE("objective_jacobian: matches finite differences of the sample mean") {
  auto spec = newsvendor::multi_item_spec(4, 0.0, Eigen::VectorXd::Constant(2, 1.0));
  auto z = newsvendor::sample_demand(spec, 500, 7);
  Eigen::VectorXd th = Eigen::VectorXd::Constant(4, 9.0);
  Eigen::VectorXd grad = newsvendor::objective_jacobian(spec, th, z).colwise().mean();
  const double h = 1e-6;
  for (int j = 0; j < 4; ++j) {
    Eigen::VectorXd tp = th, tm = th;
    tp(j) += h;
    tm(j) -= h;
    const double fd = (newsvendor::objective_samples(spec, tp, z).mean() -
                       newsvendor::objective_samples(spec, tm, z).mean()) /
                      (2.0 * h);
    CHECK(grad(j) == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("constraint_samples: saturation, zero stock, hand instance") {
  auto spec = newsvendor::single_item_spec();
  auto z = newsvendor::sample_demand(spec, 300, 2);
  Eigen::VectorXd huge = Eigen::VectorXd::Constant(1, 100.0);
  auto sat = newsvendor::constraint_samples(spec, huge, z, 0);
  CHECK(sat.isApproxToConstant(-1.0, 1e-12));
  auto zero = newsvendor::constraint_samples(spec, Eigen::VectorXd::Zero(1), z, 0);
  CHECK((zero - (z.col(0).array() - 1.0).matrix()).cwiseAbs().maxCoeff() <= 1e-12);

  NewsvendorSpec multi;
  multi.dims = 2;
  multi.cost = Eigen::VectorXd::Constant(2, 1.0);
  multi.price = Eigen::VectorXd::Constant(2, 2.0);
  multi.epsilon = Eigen::VectorXd::Constant(1, 1.0);
  multi.groups = {{0, 1}};
  multi.demand.kind = newsvendor::DemandModel::Kind::gaussian;
  multi.demand.gauss_mean = Eigen::VectorXd::Constant(2, 10.0);
  Eigen::MatrixXd hand(1, 2);
  hand << 3.0, 4.0;
  Eigen::VectorXd th(2);
  th << 1.0, 2.0;
  CHECK(newsvendor::constraint_samples(multi, th, hand, 0)(0) == doctest::Approx(19.0));
}

TEST_CASE("constraint_samples: nonincreasing in every theta coordinate") {
  auto spec = newsvendor::multi_item_spec(4, 0.6, Eigen::VectorXd::Constant(2, 1.0));
  auto z = newsvendor::sample_demand(spec, 200, 13);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> uni(0.0, 20.0);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd th(4);
    for (int j = 0; j < 4; ++j) th(j) = uni(rng);
    const int j = trial % 4;
    Eigen::VectorXd up = th;
    up(j) += 1.0;
    for (int g = 0; g < 2; ++g) {
      auto before = newsvendor::constraint_samples(spec, th, z, g);
      auto after = newsvendor::constraint_samples(spec, up, z, g);
      CHECK((after.array() <= before.array() + 1e-12).all());
    }
  }
}

TEST_CASE("population_constraint: exponential closed form") {
  auto spec = newsvendor::single_item_spec();
  Eigen::VectorXd th(1);
  th << 10.0 * std::log(10.0);
  CHECK(std::abs(newsvendor::population_constraint(spec, th, 0, 1000000, 1).value) <= 1e-12);
  th << 0.0;
  CHECK(newsvendor::population_constraint(spec, th, 0, 1000000, 1).value ==
        doctest::Approx(9.0));
}

TEST_CASE("population_constraint: closed form vs independent Monte Carlo") {
  auto spec = newsvendor::single_item_spec();
  std::mt19937_64 outer(31);
  std::uniform_real_distribution<double> uth(0.0, 35.0);
  for (int rep = 0; rep < 10; ++rep) {
    const double theta = uth(outer);
    // Test-local streaming oracle, independent of the library path.
    std::mt19937_64 rng(1000 + rep);
    std::exponential_distribution<double> expo(0.1);
    const std::int64_t draws = 10000000;
    double mean = 0.0, m2 = 0.0;
    for (std::int64_t i = 0; i < draws; ++i) {
      const double v = std::max(expo(rng) - theta, 0.0) - 1.0;
      const double delta = v - mean;
      mean += delta / static_cast<double>(i + 1);
      m2 += delta * (v - mean);
    }
    const double se = std::sqrt(m2 / static_cast<double>(draws) / static_cast<double>(draws));
    const double closed =
        newsvendor::population_constraint(spec, Eigen::VectorXd::Constant(1, theta), 0, 1000000, 1)
            .value;
    CHECK(std::abs(closed - mean) <= 4.0 * se);
  }
}

TEST_CASE("population_constraint: Gaussian oracle is seed-stable within noise") {
  auto spec = newsvendor::multi_item_spec(4, 0.0, Eigen::VectorXd::Constant(2, 1.0));
  Eigen::VectorXd th = Eigen::VectorXd::Constant(4, 12.0);
  auto a = newsvendor::population_constraint(spec, th, 0, 1000000, 11);
  auto b = newsvendor::population_constraint(spec, th, 0, 1000000, 77);
  CHECK(a.standard_error > 0.0);
  CHECK(std::abs(a.value - b.value) <= 4.0 * (a.standard_error + b.standard_error));
  CHECK_THROWS_AS(newsvendor::population_constraint(spec, th, 0, 1000, 1),
                  std::invalid_argument);
}

TEST_CASE("binding check: unconstrained SAA optimum violates the population constraint") {
  auto spec = newsvendor::single_item_spec();
  const double unconstrained = newsvendor::single_item_unconstrained_optimum(spec);
  CHECK(unconstrained == doctest::Approx(10.0 * std::log(2.0)));
  const double violation =
      newsvendor::population_constraint(spec, Eigen::VectorXd::Constant(1, unconstrained), 0,
                                        1000000, 1)
          .value;
  CHECK(violation > 0.5);  // strict complementarity at theta* = 10 ln 10
  CHECK(newsvendor::single_item_population_optimum(spec) ==
        doctest::Approx(10.0 * std::log(10.0)));
}

TEST_CASE("single_item_constraint_sd: closed second moment") {
  auto spec = newsvendor::single_item_spec();
  const double theta = 10.0 * std::log(10.0);
  CHECK(newsvendor::single_item_constraint_sd(spec, theta) ==
        doctest::Approx(std::sqrt(19.0)).epsilon(1e-12));
}

TEST_CASE("dual_ascent on the single-item SAA problem approaches 10 ln 10") {
  auto spec = newsvendor::single_item_spec();
  auto z = newsvendor::sample_demand(spec, 3000, 2024);
  auto program = newsvendor::make_program(spec, z, Eigen::VectorXd::Zero(1));
  solver::SolverConfig cfg;
  cfg.eta0 = 2.0;
  cfg.dual_tol = 5e-4;
  cfg.feasibility_tol = 5e-3;
  cfg.inner_tol = 1e-6;
  cfg.dual_max_iter = 400;
  auto res = solver::dual_ascent(program, cfg);
  CHECK(res.converged);
  // Sampling noise at n = 3000 keeps theta-hat within ~3 sd of 10 ln 10.
  CHECK(std::abs(res.theta(0) - 10.0 * std::log(10.0)) <= 2.5);
  CHECK(res.lambda(0) > 0.0);
}

TEST_CASE("spec validation rejects malformed instances") {
  auto spec = newsvendor::single_item_spec();
  spec.price(0) = 0.5;  // below cost
  CHECK_THROWS_AS(newsvendor::validate_spec(spec), std::invalid_argument);
  auto multi = newsvendor::multi_item_spec(4, 0.0, Eigen::VectorXd::Constant(2, 1.0));
  multi.groups = {{0, 1}, {1, 2, 3}};  // overlap
  CHECK_THROWS_AS(newsvendor::validate_spec(multi), std::invalid_argument);
}
