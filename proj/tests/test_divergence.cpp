#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "drocal/divergence.hpp"

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <random>

using namespace drocal;

namespace {

// Brute-force conjugate: sup over a fine t-grid of s t - (t-1)^2.
double conjugate_by_grid(double s, double t_max = 10.0, double step = 1e-4) {
  double best = -std::numeric_limits<double>::infinity();
  for (double t = 0.0; t <= t_max; t += step) {
    best = std::max(best, s * t - (t - 1.0) * (t - 1.0));
  }
  return best;
}

}  // namespace

TEST_CASE("phi: chi-square generator values") {
  CHECK(divergence::phi(1.0) == 0.0);
  CHECK(divergence::phi(0.0) == 1.0);
  CHECK(divergence::phi(3.0) == 4.0);
  CHECK(std::isinf(divergence::phi(-0.5)));
}

TEST_CASE("phi_conjugate: closed form and both branches") {
  CHECK(divergence::phi_conjugate(0.0) == 0.0);
  CHECK(divergence::phi_conjugate(2.0) == doctest::Approx(3.0));
  // s = -4 lies on the clipped branch; grid oracle confirms the -1 value.
  CHECK(divergence::phi_conjugate(-4.0) == doctest::Approx(-1.0));
  CHECK(conjugate_by_grid(-4.0) == doctest::Approx(-1.0).epsilon(1e-6));
}

TEST_CASE("phi_conjugate: matches grid brute force on random s") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> uni(-5.0, 5.0);
  for (int k = 0; k < 100; ++k) {
    const double s = uni(rng);
    CHECK(std::abs(divergence::phi_conjugate(s) - conjugate_by_grid(s)) <= 1e-6);
  }
}

TEST_CASE("phi_conjugate: convex and nondecreasing on a grid") {
  double prev = divergence::phi_conjugate(-6.0);
  double prev_slope = -std::numeric_limits<double>::infinity();
  for (double s = -5.99; s <= 6.0; s += 0.01) {
    const double cur = divergence::phi_conjugate(s);
    const double slope = (cur - prev) / 0.01;
    CHECK(cur >= prev - 1e-12);
    CHECK(slope >= prev_slope - 1e-9);
    prev = cur;
    prev_slope = slope;
  }
}

TEST_CASE("Fenchel inequality: phi*(s) >= s t - phi(t)") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> us(-5.0, 5.0);
  std::uniform_real_distribution<double> ut(0.0, 5.0);
  for (int k = 0; k < 500; ++k) {
    const double s = us(rng);
    const double t = ut(rng);
    CHECK(divergence::phi_conjugate(s) >= s * t - divergence::phi(t) - 1e-12);
  }
}

TEST_CASE("phi_conjugate_derivative: values and finite differences") {
  CHECK(divergence::phi_conjugate_derivative(0.0) == 1.0);
  CHECK(divergence::phi_conjugate_derivative(-2.0) == 0.0);
  CHECK(divergence::phi_conjugate_derivative(-3.0) == 0.0);
  const double h = 1e-6;
  const double fd =
      (divergence::phi_conjugate(1.0 + h) - divergence::phi_conjugate(1.0 - h)) / (2.0 * h);
  CHECK(divergence::phi_conjugate_derivative(1.0) == doctest::Approx(fd).epsilon(1e-6));
}

TEST_CASE("perspective form agrees with mu * phi*(s/mu) and is safe near 0") {
  CHECK(divergence::perspective_phi_conjugate(1.0, 2.0) ==
        doctest::Approx(2.0 * divergence::phi_conjugate(0.5)));
  CHECK(divergence::perspective_phi_conjugate(-1.0, 1e-14) == doctest::Approx(-1e-14));
  CHECK(std::isfinite(divergence::perspective_phi_conjugate(3.0, 1e-300)) == true);
}

TEST_CASE("chi_square_between: uniform, point mass, and a two-atom case") {
  const int n = 7;
  Eigen::VectorXd uniform = Eigen::VectorXd::Constant(n, 1.0 / n);
  CHECK(divergence::chi_square_between(uniform, n) == doctest::Approx(0.0));

  Eigen::VectorXd point = Eigen::VectorXd::Zero(n);
  point(3) = 1.0;
  // Direct expansion: (1/n)[(n-1)^2 + (n-1)] = n - 1.
  CHECK(divergence::chi_square_between(point, n) == doctest::Approx(n - 1.0));

  Eigen::VectorXd two(2);
  two << 0.25, 0.75;
  CHECK(divergence::chi_square_between(two, 2) == doctest::Approx(0.25));
}

TEST_CASE("chi_square_between: rejects simplex violations") {
  Eigen::VectorXd bad(2);
  bad << 0.6, 0.6;
  CHECK_THROWS_AS(divergence::chi_square_between(bad, 2), std::domain_error);
  bad << -0.1, 1.1;
  CHECK_THROWS_AS(divergence::chi_square_between(bad, 2), std::domain_error);
  Eigen::VectorXd ok(2);
  ok << 0.5, 0.5;
  CHECK_THROWS_AS(divergence::chi_square_between(ok, 3), std::invalid_argument);
}
