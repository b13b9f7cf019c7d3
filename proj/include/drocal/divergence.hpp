#pragma once

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace drocal::divergence {

/// chi-square generator: phi(t) = (t-1)^2 on t >= 0, +inf otherwise.
inline double phi(double t) {
  if (t < 0.0) return std::numeric_limits<double>::infinity();
  const double u = t - 1.0;
  return u * u;
}

/// Convex conjugate of phi restricted to t >= 0:
///   phi*(s) = sup_{t >= 0} { s t - (t-1)^2 } = s + s^2/4   for s >= -2,
///                                              -1          for s <  -2.
/// The unrestricted form s + s^2/4 is wrong below s = -2 because the
/// maximizing t = 1 + s/2 would be negative there.
inline double phi_conjugate(double s) {
  if (s < -2.0) return -1.0;
  return s + 0.25 * s * s;
}

/// Derivative of phi_conjugate; equals the maximizing likelihood ratio
/// t = 1 + s/2 clipped at zero. Subgradient 0 is chosen at the kink s = -2.
inline double phi_conjugate_derivative(double s) {
  if (s <= -2.0) return 0.0;
  return 1.0 + 0.5 * s;
}

/// Perspective mu * phi*(s / mu) for mu > 0, written so that small mu is
/// arithmetic-safe: s + s^2/(4 mu) on the branch s >= -2 mu, else -mu.
inline double perspective_phi_conjugate(double s, double mu) {
  if (s < -2.0 * mu) return -mu;
  return s + s * s / (4.0 * mu);
}

/// chi-square divergence of a discrete distribution p from the uniform
/// distribution on n atoms: D(P || Un) = (1/n) sum_i (n p_i - 1)^2.
inline double chi_square_between(const Eigen::VectorXd& p, Eigen::Index uniform_n) {
  if (p.size() != uniform_n)
    throw std::invalid_argument("chi_square_between: p has " + std::to_string(p.size()) +
                                " entries, expected " + std::to_string(uniform_n));
  if (uniform_n < 1) throw std::invalid_argument("chi_square_between: n must be >= 1");
  if (p.minCoeff() < 0.0)
    throw std::domain_error("chi_square_between: negative probability entry");
  if (std::abs(p.sum() - 1.0) > 1e-10)
    throw std::domain_error("chi_square_between: probabilities do not sum to 1");
  const double n = static_cast<double>(uniform_n);
  return (n * p.array() - 1.0).square().sum() / n;
}

}  // namespace drocal::divergence
