#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "drocal/divergence.hpp"
#include "drocal/probstats.hpp"
#include "drocal/robust_eval.hpp"

#include <Eigen/Core>

#include <cmath>
#include <random>

using namespace drocal;
using robust::ConstraintValues;

TEST_CASE("robust_sup_dual: constants are reweighting-invariant") {
  ConstraintValues cv{Eigen::VectorXd::Constant(6, 2.5), 3.0};
  auto res = robust::robust_sup_dual(cv);
  CHECK(res.value == doctest::Approx(2.5));
  CHECK(res.regime == robust::SupRegime::uniform);
}

TEST_CASE("robust_sup_dual: rho = 0 gives the sample mean") {
  Eigen::VectorXd v(4);
  v << 1.0, -2.0, 0.5, 3.5;
  auto res = robust::robust_sup_dual({v, 0.0});
  CHECK(res.value == doctest::Approx(v.mean()));
}

TEST_CASE("robust_sup_dual and friends: two-point closed form") {
  Eigen::VectorXd v(2);
  v << 0.0, 1.0;
  ConstraintValues cv{v, 0.5};
  // Worst case p = (0.25, 0.75) saturates sum (2 p_i - 1)^2 = 0.5.
  CHECK(robust::robust_sup_dual(cv).value == doctest::Approx(0.75).epsilon(1e-9));
  auto primal = robust::robust_sup_primal_oracle(cv);
  CHECK(primal.value == doctest::Approx(0.75).epsilon(1e-9));
  CHECK(primal.weights(0) == doctest::Approx(0.25).epsilon(1e-7));
  CHECK(primal.weights(1) == doctest::Approx(0.75).epsilon(1e-7));
  CHECK(robust::variance_expansion(cv) == doctest::Approx(0.75));
}

TEST_CASE("robust_sup_primal_oracle: rho = 0 and huge rho endpoints") {
  Eigen::VectorXd v(5);
  v << -1.0, 4.0, 2.0, 4.0, 0.0;
  auto uniform = robust::robust_sup_primal_oracle({v, 0.0});
  CHECK(uniform.value == doctest::Approx(v.mean()));
  CHECK(uniform.weights.isApproxToConstant(0.2, 1e-12));

  // rho >= n(n-1) admits a point mass; ties break to the lowest index.
  auto point = robust::robust_sup_primal_oracle({v, 20.0});
  CHECK(point.value == doctest::Approx(4.0));
  CHECK(point.weights(1) == doctest::Approx(1.0));
  CHECK(point.weights(3) == doctest::Approx(0.0));
}

TEST_CASE("strong duality on 200 random instances") {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<int> size(3, 50);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int inst = 0; inst < 200; ++inst) {
    const int n = size(rng);
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = gauss(rng);
    const double rho = uni(rng) * 2.0 * n;
    ConstraintValues cv{v, rho};
    const double dual = robust::robust_sup_dual(cv).value;
    const double primal = robust::robust_sup_primal_oracle(cv).value;
    CHECK(std::abs(dual - primal) <= 1e-5 * (1.0 + std::abs(primal)));
  }
}

TEST_CASE("variance expansion is exact while the weights stay interior") {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> gauss(0.0, 1.0);
  int tested = 0;
  for (int inst = 0; inst < 400 && tested < 50; ++inst) {
    const int n = 20;
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = gauss(rng);
    ConstraintValues cv{v, 0.4};
    auto oracle = robust::robust_sup_primal_oracle(cv);
    if (oracle.weights.minCoeff() < 1e-9) continue;
    ++tested;
    CHECK(std::abs(robust::robust_sup_dual(cv).value - robust::variance_expansion(cv)) <= 1e-6);
  }
  CHECK(tested >= 50);
}

TEST_CASE("monotone in rho, sandwiched between mean and max") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd v(25);
  for (int i = 0; i < 25; ++i) v(i) = gauss(rng);
  double prev = v.mean();
  for (double rho : {0.0, 0.1, 0.5, 2.0, 10.0, 100.0, 400.0, 1000.0}) {
    const double val = robust::robust_sup_dual({v, rho}).value;
    CHECK(val >= prev - 1e-9);
    CHECK(val >= v.mean() - 1e-9);
    CHECK(val <= v.maxCoeff() + 1e-9);
    prev = val;
  }
}

TEST_CASE("max recovery at rho >= n(n-1)") {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd v(12);
  for (int i = 0; i < 12; ++i) v(i) = gauss(rng);
  const double rho = 12.0 * 11.0;
  CHECK(robust::robust_sup_dual({v, rho}).value == doctest::Approx(v.maxCoeff()).epsilon(1e-7));
  CHECK(robust::robust_sup_primal_oracle({v, rho}).value == doctest::Approx(v.maxCoeff()));
}

TEST_CASE("translation equivariance and positive homogeneity") {
  std::mt19937_64 rng(41);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd v(15);
  for (int i = 0; i < 15; ++i) v(i) = gauss(rng);
  for (double rho : {0.3, 3.0, 30.0}) {
    const double base = robust::robust_sup_dual({v, rho}).value;
    const double shifted = robust::robust_sup_dual({v.array() + 5.5, rho}).value;
    CHECK(shifted == doctest::Approx(base + 5.5).epsilon(1e-8));
    const double scaled = robust::robust_sup_dual({2.5 * v, rho}).value;
    CHECK(scaled == doctest::Approx(2.5 * base).epsilon(1e-8));
  }
}

TEST_CASE("robust_sup_dual: warm starts reproduce the cold solution") {
  std::mt19937_64 rng(55);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd v(30);
  for (int i = 0; i < 30; ++i) v(i) = gauss(rng);
  ConstraintValues cv{v, 12.0};
  auto cold = robust::robust_sup_dual(cv);
  robust::RobustSupOptions opts;
  opts.warm_start = robust::InnerDualVars{cold.inner.mu * 3.0, cold.inner.nu - 0.7};
  auto warm = robust::robust_sup_dual(cv, opts);
  CHECK(warm.value == doctest::Approx(cold.value).epsilon(1e-8));
}

TEST_CASE("robust_sup_gradient: constant, SAA reduction, finite differences") {
  const int n = 40, d = 3;
  std::mt19937_64 rng(101);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd z(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) z(i, j) = gauss(rng);
  Eigen::VectorXd theta(d);
  theta << 0.4, -0.2, 1.1;

  // Constant g: zero gradient.
  {
    auto sol = robust::robust_sup_dual({Eigen::VectorXd::Constant(n, 3.0), 1.0});
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n, d);
    CHECK(robust::robust_sup_gradient(Eigen::VectorXd::Constant(n, 3.0), jac, sol).norm() <=
          1e-15);
  }

  // Linear g with rho = 0 reduces to the SAA mean gradient.
  {
    Eigen::VectorXd vals = z * theta;
    auto sol = robust::robust_sup_dual({vals, 0.0});
    Eigen::VectorXd grad = robust::robust_sup_gradient(vals, z, sol);
    CHECK(grad.isApprox(z.colwise().mean().transpose(), 1e-12));
  }

  // Smooth nonlinear g against central differences of the dual value.
  {
    auto g_vals = [&](const Eigen::VectorXd& th) {
      Eigen::VectorXd out(n);
      for (int i = 0; i < n; ++i) {
        const double u = z.row(i).dot(th);
        out(i) = std::tanh(u) + 0.1 * u * u;
      }
      return out;
    };
    auto g_jac = [&](const Eigen::VectorXd& th) {
      Eigen::MatrixXd out(n, d);
      for (int i = 0; i < n; ++i) {
        const double u = z.row(i).dot(th);
        const double du = 1.0 - std::tanh(u) * std::tanh(u) + 0.2 * u;
        out.row(i) = du * z.row(i);
      }
      return out;
    };
    const double rho = 2.0;
    auto sol = robust::robust_sup_dual({g_vals(theta), rho});
    Eigen::VectorXd grad = robust::robust_sup_gradient(g_vals(theta), g_jac(theta), sol);
    const double h = 1e-5;
    for (int j = 0; j < d; ++j) {
      Eigen::VectorXd tp = theta, tm = theta;
      tp(j) += h;
      tm(j) -= h;
      const double vp = robust::robust_sup_dual({g_vals(tp), rho}).value;
      const double vm = robust::robust_sup_dual({g_vals(tm), rho}).value;
      const double fd = (vp - vm) / (2.0 * h);
      CHECK(std::abs(grad(j) - fd) <= 1e-4 * (1.0 + std::abs(fd)));
    }
  }
}

TEST_CASE("worst-case weights from the dual match the primal oracle") {
  std::mt19937_64 rng(4242);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd v(18);
  for (int i = 0; i < 18; ++i) v(i) = gauss(rng);
  ConstraintValues cv{v, 9.0};
  auto dual = robust::robust_sup_dual(cv);
  auto primal = robust::robust_sup_primal_oracle(cv);
  Eigen::VectorXd w = robust::worst_case_weights(v, dual) / 18.0;
  CHECK((w - primal.weights).cwiseAbs().maxCoeff() <= 1e-5);
  CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("robust_eval input validation") {
  CHECK_THROWS_AS(robust::robust_sup_dual({Eigen::VectorXd(), 1.0}), std::invalid_argument);
  Eigen::VectorXd v(3);
  v << 1, 2, 3;
  CHECK_THROWS_AS(robust::robust_sup_dual({v, -1.0}), std::invalid_argument);
  CHECK_THROWS_AS(robust::variance_expansion({Eigen::VectorXd::Ones(1), 1.0}),
                  std::invalid_argument);
}
