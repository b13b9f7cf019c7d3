#pragma once

#include "drocal/solver.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace drocal::newsvendor {

struct DemandModel {
  enum class Kind { exponential, gaussian } kind = Kind::exponential;
  double exp_mean = 10.0;            // exponential, dims = 1
  Eigen::VectorXd gauss_mean;        // gaussian, length = dims
  double variance_scale = 9.0;       // Sigma = variance_scale * exchangeable(r)
  double exchangeable_r = 0.0;
};

/// Resource-constrained newsvendor instance: stock theta in [0, 100]^d,
/// profit p^T min{Z, theta} - c^T theta, and one overflow constraint
/// per item group.
struct NewsvendorSpec {
  int dims = 1;
  Eigen::VectorXd cost;        // c > 0
  Eigen::VectorXd price;       // p >= c
  Eigen::VectorXd epsilon;     // one tolerance per group
  std::vector<std::vector<int>> groups;
  DemandModel demand;
  double theta_lo = 0.0;
  double theta_hi = 100.0;
};

struct PopulationValue {
  double value = 0.0;
  double standard_error = 0.0;  // zero when a closed form was used
};

/// Appendix-style single-item instance: exponential demand with mean 10,
/// c = 1, p = 2, epsilon = 1.
NewsvendorSpec single_item_spec();

/// d-item instance with Gaussian demand N(10, 9 * exchangeable(r)) split into
/// two equal groups, c = 1, p = 2, per-group tolerance from `epsilon`.
NewsvendorSpec multi_item_spec(int dims, double r, const Eigen::VectorXd& epsilon);

void validate_spec(const NewsvendorSpec& spec);

/// n IID demand draws, deterministic per seed (Gaussian via Cholesky).
Eigen::MatrixXd sample_demand(const NewsvendorSpec& spec, Eigen::Index n, std::uint64_t seed);

/// Per-sample minimization objective c^T theta - p^T min{Z_i, theta}
/// (componentwise min) and its per-sample gradients.
Eigen::VectorXd objective_samples(const NewsvendorSpec& spec, const Eigen::VectorXd& theta,
                                  const Eigen::MatrixXd& samples);
Eigen::MatrixXd objective_jacobian(const NewsvendorSpec& spec, const Eigen::VectorXd& theta,
                                   const Eigen::MatrixXd& samples);

/// Per-sample constraint values: (||Z^(g)||^2 - ||theta^(g)||^2)_+ - eps_g
/// for multi-item specs, (Z - theta)_+ - eps when dims = 1.
Eigen::VectorXd constraint_samples(const NewsvendorSpec& spec, const Eigen::VectorXd& theta,
                                   const Eigen::MatrixXd& samples, int group);
Eigen::MatrixXd constraint_jacobian(const NewsvendorSpec& spec, const Eigen::VectorXd& theta,
                                    const Eigen::MatrixXd& samples, int group);

/// Population constraint value E[g(theta; Z)]. Exact closed form
/// m e^{-theta/m} - eps for the single-item exponential case; otherwise a
/// seeded Monte Carlo oracle with at least 1e6 draws and a reported
/// standard error.
PopulationValue population_constraint(const NewsvendorSpec& spec, const Eigen::VectorXd& theta,
                                      int group, std::int64_t oracle_draws, std::uint64_t seed);

/// All groups in one pass over the Monte Carlo draws.
std::vector<PopulationValue> population_constraints(const NewsvendorSpec& spec,
                                                    const Eigen::VectorXd& theta,
                                                    std::int64_t oracle_draws,
                                                    std::uint64_t seed);

/// Closed-form facts for the single-item exponential instance.
/// Population-feasible optimum m ln(m / eps); 10 ln 10 for the default spec.
double single_item_population_optimum(const NewsvendorSpec& spec);
/// Unconstrained SAA population optimum m ln(p / (p - c)).
double single_item_unconstrained_optimum(const NewsvendorSpec& spec);
/// Population standard deviation of (Z - theta)_+ - eps at theta.
double single_item_constraint_sd(const NewsvendorSpec& spec, double theta);

/// Assembles the solver program; radii has one entry per group.
solver::RobustProgram make_program(const NewsvendorSpec& spec, const Eigen::MatrixXd& samples,
                                   const Eigen::VectorXd& radii);

}  // namespace drocal::newsvendor
