#pragma once

#include "drocal/probstats.hpp"
#include "drocal/solver.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <string>

namespace drocal::calibration {

/// Calibrated uncertainty-set radii, one per constraint.
struct RadiusVector {
  Eigen::VectorXd rho;
  enum class Provenance { per_constraint, joint } provenance = Provenance::per_constraint;
};

/// Pivotal single-constraint rule: rho = z^2 with z the 1-alpha standard
/// normal quantile. Rejects alpha >= 0.5 (the quantile would not be positive;
/// plain SAA already achieves one half).
double radius_for_level(const stats::ConfidenceLevel& alpha);

/// Bisection on a common threshold t so that the orthant probability of
/// N(0, R) at (t, ..., t) matches joint_level within twice the Monte Carlo
/// standard error; returns rho_k = t^2 for every constraint.
RadiusVector joint_radius_search(const stats::CorrelationEstimate& correlation,
                                 double joint_level, std::int64_t mc_draws, std::uint64_t seed);

/// Correlation of the per-sample constraint values g_k(theta_hat; Z_i),
/// typically at the stage-1 SAA solution.
stats::CorrelationEstimate estimate_constraint_correlation(
    const solver::RobustProgram& program, const Eigen::VectorXd& theta_hat);

}  // namespace drocal::calibration
