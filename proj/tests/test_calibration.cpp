#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "drocal/calibration.hpp"

#include <Eigen/Core>

#include <cmath>
#include <random>

using namespace drocal;

TEST_CASE("radius_for_level: values squared from the quantile table") {
  CHECK(calibration::radius_for_level({0.05, false}) == doctest::Approx(2.703).epsilon(2e-3));
  CHECK(calibration::radius_for_level({0.1, false}) == doctest::Approx(1.641).epsilon(2e-3));
  // alpha -> 0.5 recovers SAA (rho -> 0).
  CHECK(calibration::radius_for_level({0.4999, false}) <= 1e-6);
}

TEST_CASE("radius_for_level: rejects alpha outside (0, 0.5)") {
  CHECK_THROWS_AS(calibration::radius_for_level({0.5, false}), std::domain_error);
  CHECK_THROWS_AS(calibration::radius_for_level({0.7, false}), std::domain_error);
  CHECK_THROWS_AS(calibration::radius_for_level({0.0, false}), std::domain_error);
}

TEST_CASE("radius_for_level: strictly decreasing in alpha") {
  double prev = calibration::radius_for_level({0.01, false});
  for (double a = 0.02; a < 0.5; a += 0.02) {
    const double cur = calibration::radius_for_level({a, false});
    CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("joint_radius_search: independent pair at the product level") {
  stats::CorrelationEstimate corr{Eigen::MatrixXd::Identity(2, 2), 1000};
  auto rv = calibration::joint_radius_search(corr, 0.9025, 400000, 7);
  CHECK(rv.rho.size() == 2);
  CHECK(rv.rho(0) == rv.rho(1));
  CHECK(std::sqrt(rv.rho(0)) == doctest::Approx(1.645).epsilon(0.01));
  CHECK(rv.provenance == calibration::RadiusVector::Provenance::joint);
}

TEST_CASE("joint_radius_search: perfectly correlated pair collapses to univariate") {
  stats::CorrelationEstimate corr{Eigen::MatrixXd::Ones(2, 2), 1000};
  auto rv = calibration::joint_radius_search(corr, 0.95, 400000, 11);
  CHECK(std::sqrt(rv.rho(0)) == doctest::Approx(1.645).epsilon(0.01));
}

TEST_CASE("joint_radius_search: K = 1 reduces to the pivotal rule") {
  stats::CorrelationEstimate corr{Eigen::MatrixXd::Identity(1, 1), 1000};
  auto rv = calibration::joint_radius_search(corr, 0.95, 400000, 13);
  CHECK(rv.rho(0) == doctest::Approx(calibration::radius_for_level({0.05, false})).epsilon(0.02));
}

TEST_CASE("joint_radius_search: threshold nonincreasing in correlation") {
  double prev_t = 1e9;
  for (double r : {0.0, 0.3, 0.6, 0.9, 0.99}) {
    Eigen::MatrixXd m(2, 2);
    m << 1.0, r, r, 1.0;
    auto rv = calibration::joint_radius_search({m, 1000}, 0.9, 200000, 21);
    const double t = std::sqrt(rv.rho(0));
    CHECK(t <= prev_t + 5e-3);  // small slack for the MC stopping rule
    prev_t = t;
  }
}

TEST_CASE("joint_radius_search: rejects levels outside (0.5, 1)") {
  stats::CorrelationEstimate corr{Eigen::MatrixXd::Identity(2, 2), 100};
  CHECK_THROWS_AS(calibration::joint_radius_search(corr, 0.5, 20000, 1), std::domain_error);
  CHECK_THROWS_AS(calibration::joint_radius_search(corr, 1.0, 20000, 1), std::domain_error);
}

TEST_CASE("estimate_constraint_correlation: duplicated and negated constraints") {
  const int n = 50;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd noise(n);
  for (int i = 0; i < n; ++i) noise(i) = gauss(rng);

  solver::RobustProgram p;
  p.sample_count = n;
  p.objective.values = [n](const Eigen::VectorXd&) { return Eigen::VectorXd::Zero(n); };
  p.objective.jacobian = [n](const Eigen::VectorXd&) { return Eigen::MatrixXd::Zero(n, 1); };
  solver::ConstraintSpec c1;
  c1.g.values = [noise](const Eigen::VectorXd& th) {
    return (noise.array() + th(0)).matrix().eval();
  };
  c1.g.jacobian = [n](const Eigen::VectorXd&) { return Eigen::MatrixXd::Ones(n, 1); };
  solver::ConstraintSpec c2 = c1;
  solver::ConstraintSpec c3;
  c3.g.values = [noise](const Eigen::VectorXd& th) {
    return (-noise.array() + th(0)).matrix().eval();
  };
  c3.g.jacobian = [n](const Eigen::VectorXd&) { return Eigen::MatrixXd::Ones(n, 1); };
  p.constraints = {c1, c2, c3};
  p.box_lower = Eigen::VectorXd::Constant(1, -1.0);
  p.box_upper = Eigen::VectorXd::Constant(1, 1.0);
  p.theta_init = Eigen::VectorXd::Zero(1);

  auto corr = calibration::estimate_constraint_correlation(p, Eigen::VectorXd::Zero(1));
  CHECK(corr.matrix(0, 1) == doctest::Approx(1.0));
  CHECK(corr.matrix(0, 2) == doctest::Approx(-1.0));
  CHECK(corr.sample_count == n);
}
