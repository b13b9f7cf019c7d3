#include "drocal/calibration.hpp"

#include <cmath>
#include <stdexcept>

namespace drocal::calibration {

double radius_for_level(const stats::ConfidenceLevel& alpha) {
  if (!(alpha.alpha > 0.0 && alpha.alpha < 1.0))
    throw std::domain_error("radius_for_level: alpha must lie in (0, 1)");
  if (alpha.alpha >= 0.5)
    throw std::domain_error(
        "radius_for_level: alpha >= 0.5 rejected; the construction needs a positive quantile");
  const double z = stats::normal_quantile(1.0 - alpha.alpha);
  return z * z;
}

RadiusVector joint_radius_search(const stats::CorrelationEstimate& correlation,
                                 double joint_level, std::int64_t mc_draws,
                                 std::uint64_t seed) {
  if (!(joint_level > 0.5 && joint_level < 1.0))
    throw std::domain_error("joint_radius_search: joint level must lie in (0.5, 1)");
  const Eigen::Index k = correlation.matrix.rows();

  // Reusing the seed gives common random numbers across evaluations, so the
  // estimated orthant probability is monotone in t and bisection is sound.
  auto orthant = [&](double t) {
    return stats::mvn_orthant_probability(correlation, Eigen::VectorXd::Constant(k, t),
                                          mc_draws, seed);
  };

  double lo = 0.0, hi = 8.0;
  auto p_lo = orthant(lo);
  auto p_hi = orthant(hi);
  if (p_lo.value > joint_level || p_hi.value < joint_level)
    throw std::runtime_error("joint_radius_search: bracket failure, P(" + std::to_string(lo) +
                             ") = " + std::to_string(p_lo.value) + ", P(" + std::to_string(hi) +
                             ") = " + std::to_string(p_hi.value));

  double t = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    t = 0.5 * (lo + hi);
    auto est = orthant(t);
    if (std::abs(est.value - joint_level) <= 2.0 * est.standard_error || (hi - lo) < 1e-6)
      break;
    if (est.value < joint_level)
      lo = t;
    else
      hi = t;
  }

  RadiusVector out;
  out.rho = Eigen::VectorXd::Constant(k, t * t);
  out.provenance = RadiusVector::Provenance::joint;
  return out;
}

stats::CorrelationEstimate estimate_constraint_correlation(const solver::RobustProgram& program,
                                                           const Eigen::VectorXd& theta_hat) {
  const auto kc = static_cast<Eigen::Index>(program.constraints.size());
  if (kc < 1) throw std::invalid_argument("estimate_constraint_correlation: no constraints");
  Eigen::MatrixXd values(program.sample_count, kc);
  for (Eigen::Index k = 0; k < kc; ++k) {
    Eigen::VectorXd col = program.constraints[static_cast<std::size_t>(k)].g.values(theta_hat);
    if (col.size() != program.sample_count)
      throw std::invalid_argument(
          "estimate_constraint_correlation: constraint value length mismatch");
    values.col(k) = col;
  }
  return stats::correlation_matrix(values);
}

}  // namespace drocal::calibration
