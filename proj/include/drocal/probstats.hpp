#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <utility>

namespace drocal::stats {

/// Target violation probability alpha, plus whether it is meant per
/// constraint or jointly across all constraints.
struct ConfidenceLevel {
  double alpha = 0.05;
  bool joint = false;
};

/// Empirical correlation matrix of constraint values with the sample count
/// it was estimated from. Unit diagonal, symmetric, entries in [-1, 1],
/// positive semidefinite up to a 1e-8 eigenvalue tolerance.
struct CorrelationEstimate {
  Eigen::MatrixXd matrix;
  Eigen::Index sample_count = 0;
};

struct MonteCarloEstimate {
  double value = 0.0;
  double standard_error = 0.0;
};

/// Inverse standard normal CDF. Acklam's rational approximation followed by
/// one Halley refinement against std::erfc; absolute error is well below
/// the 1e-8 target across (0, 1).
double normal_quantile(double p);

/// Standard normal CDF via std::erfc.
double normal_cdf(double z);

/// Mean and population variance (divide by n) of a sample. The population
/// convention matches the exact closed form of the chi-square dual, so it is
/// used everywhere in this library.
std::pair<double, double> empirical_moments(const Eigen::VectorXd& values);

/// Empirical correlation matrix R = D^{-1/2} Sigma D^{-1/2} of the columns
/// of an n x K sample matrix. Throws std::domain_error if a column is
/// numerically constant (variance < 1e-12).
CorrelationEstimate correlation_matrix(const Eigen::MatrixXd& samples);

/// Validates the CorrelationEstimate invariants; throws std::domain_error.
void validate_correlation(const CorrelationEstimate& corr);

/// Plain Monte Carlo estimate of P{ U <= thresholds componentwise } for
/// U ~ N(0, R), sampled through a Cholesky factor of R (eigenvalue-clipped
/// to >= 0 when R is only semidefinite). Deterministic for a fixed seed.
MonteCarloEstimate mvn_orthant_probability(const CorrelationEstimate& correlation,
                                           const Eigen::VectorXd& thresholds,
                                           std::int64_t draws, std::uint64_t seed);

}  // namespace drocal::stats
