#include "drocal/probstats.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <random>
#include <stdexcept>

namespace drocal::stats {

namespace {

constexpr double kSqrt2 = 1.4142135623730950488;
constexpr double kSqrt2Pi = 2.5066282746310005024;

// Acklam's coefficients for the inverse normal CDF.
constexpr double kA[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                          -2.759285104469687e+02, 1.383577518672690e+02,
                          -3.066479806614716e+01, 2.506628277459239e+00};
constexpr double kB[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                          -1.556989798598866e+02, 6.680131188771972e+01,
                          -1.328068155288572e+01};
constexpr double kC[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                          -2.400758277161838e+00, -2.549732539343734e+00,
                          4.374664141464968e+00,  2.938163982698783e+00};
constexpr double kD[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                          2.445134137142996e+00, 3.754408661907416e+00};

double acklam_quantile(double p) {
  constexpr double p_low = 0.02425;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((kC[0] * q + kC[1]) * q + kC[2]) * q + kC[3]) * q + kC[4]) * q + kC[5]) /
           ((((kD[0] * q + kD[1]) * q + kD[2]) * q + kD[3]) * q + 1.0);
  }
  if (p > 1.0 - p_low) {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((kC[0] * q + kC[1]) * q + kC[2]) * q + kC[3]) * q + kC[4]) * q + kC[5]) /
           ((((kD[0] * q + kD[1]) * q + kD[2]) * q + kD[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((kA[0] * r + kA[1]) * r + kA[2]) * r + kA[3]) * r + kA[4]) * r + kA[5]) * q /
         (((((kB[0] * r + kB[1]) * r + kB[2]) * r + kB[3]) * r + kB[4]) * r + 1.0);
}

}  // namespace

double normal_cdf(double z) { return 0.5 * std::erfc(-z / kSqrt2); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw std::domain_error("normal_quantile: p must lie in (0, 1)");
  double x = acklam_quantile(p);
  // One Halley step pushes the approximation to near machine precision.
  const double e = normal_cdf(x) - p;
  const double u = e * kSqrt2Pi * std::exp(0.5 * x * x);
  x -= u / (1.0 + 0.5 * x * u);
  return x;
}

std::pair<double, double> empirical_moments(const Eigen::VectorXd& values) {
  if (values.size() < 1) throw std::invalid_argument("empirical_moments: empty sample");
  const double mean = values.mean();
  const double var = (values.array() - mean).square().sum() / static_cast<double>(values.size());
  return {mean, var};
}

CorrelationEstimate correlation_matrix(const Eigen::MatrixXd& samples) {
  const Eigen::Index n = samples.rows();
  const Eigen::Index k = samples.cols();
  if (n < 2) throw std::invalid_argument("correlation_matrix: need at least 2 samples");
  Eigen::MatrixXd centered = samples.rowwise() - samples.colwise().mean();
  Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n);
  for (Eigen::Index j = 0; j < k; ++j) {
    if (cov(j, j) < 1e-12)
      throw std::domain_error("correlation_matrix: column " + std::to_string(j) +
                              " is numerically constant");
  }
  Eigen::VectorXd inv_sd = cov.diagonal().array().sqrt().inverse();
  Eigen::MatrixXd corr = inv_sd.asDiagonal() * cov * inv_sd.asDiagonal();
  // Tidy up rounding so the invariants hold exactly.
  corr = 0.5 * (corr + corr.transpose());
  corr = corr.array().min(1.0).max(-1.0);
  corr.diagonal().setOnes();
  CorrelationEstimate out{std::move(corr), n};
  validate_correlation(out);
  return out;
}

void validate_correlation(const CorrelationEstimate& corr) {
  const Eigen::MatrixXd& r = corr.matrix;
  if (r.rows() != r.cols()) throw std::domain_error("correlation: matrix not square");
  if (!r.isApprox(r.transpose(), 1e-12)) throw std::domain_error("correlation: not symmetric");
  if ((r.diagonal().array() - 1.0).abs().maxCoeff() > 1e-12)
    throw std::domain_error("correlation: diagonal not one");
  if (r.array().abs().maxCoeff() > 1.0 + 1e-12)
    throw std::domain_error("correlation: entry outside [-1, 1]");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(r, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-8)
    throw std::domain_error("correlation: not positive semidefinite within tolerance");
}

MonteCarloEstimate mvn_orthant_probability(const CorrelationEstimate& correlation,
                                           const Eigen::VectorXd& thresholds,
                                           std::int64_t draws, std::uint64_t seed) {
  validate_correlation(correlation);
  const Eigen::Index k = correlation.matrix.rows();
  if (thresholds.size() != k)
    throw std::invalid_argument("mvn_orthant_probability: threshold length mismatch");
  if (!thresholds.allFinite())
    throw std::invalid_argument("mvn_orthant_probability: thresholds must be finite");
  if (draws < 10000)
    throw std::invalid_argument("mvn_orthant_probability: need at least 1e4 draws");

  // Cholesky factor; fall back to an eigenvalue-clipped square root for
  // semidefinite matrices (e.g. perfectly correlated constraints).
  Eigen::MatrixXd chol;
  Eigen::LLT<Eigen::MatrixXd> llt(correlation.matrix);
  if (llt.info() == Eigen::Success) {
    chol = llt.matrixL();
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(correlation.matrix);
    if (eig.eigenvalues().minCoeff() < -1e-6)
      throw std::domain_error("mvn_orthant_probability: correlation not PSD after repair");
    Eigen::VectorXd clipped = eig.eigenvalues().array().max(0.0).sqrt();
    chol = eig.eigenvectors() * clipped.asDiagonal();
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd xi(k), u(k);
  std::int64_t hits = 0;
  for (std::int64_t d = 0; d < draws; ++d) {
    for (Eigen::Index j = 0; j < k; ++j) xi(j) = gauss(rng);
    u.noalias() = chol * xi;
    if ((u.array() <= thresholds.array()).all()) ++hits;
  }
  const double p = static_cast<double>(hits) / static_cast<double>(draws);
  const double se = std::sqrt(std::max(p * (1.0 - p), 0.0) / static_cast<double>(draws));
  return {p, se};
}

}  // namespace drocal::stats
