#pragma once

#include "drocal/solver.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace drocal::fairness {

/// Binary classification data: features include an intercept column (last),
/// labels and protected group are 0/1 with 1 the advantaged group.
struct LabeledDataset {
  Eigen::MatrixXd features;
  Eigen::VectorXi labels;
  Eigen::VectorXi group;
  std::vector<std::string> feature_names;
};

void validate_dataset(const LabeledDataset& ds);

/// Sidecar schema for CSV ingestion. When `columns` is non-empty the file is
/// treated as headerless with those names in order.
struct DatasetSchema {
  std::string label_column;
  std::string positive_label;
  std::string group_column;
  std::string advantaged_group;
  std::vector<std::string> numeric_columns;
  std::vector<std::string> categorical_columns;
  std::vector<std::string> columns;
};

DatasetSchema load_schema(const std::string& path);

/// One-hot encodes categoricals (levels sorted), standardizes numeric columns
/// to zero mean and unit variance (constant columns map to zeros), appends an
/// intercept. Deterministic given the schema.
LabeledDataset load_dataset(const std::string& csv_path, const DatasetSchema& schema);

/// Defaults give equal label base rates with the group signal confined to
/// the first coordinate, so constraining the rate gap trades accuracy
/// smoothly (tilting away from x0) instead of through degenerate classifiers.
struct SyntheticParams {
  int feature_dim = 2;
  double p_group1 = 0.5;
  double base_rate_a0 = 0.25;
  double base_rate_a1 = 0.25;
  Eigen::VectorXd class_shift;  // defaults to (1.6, 1.6, 1.0, ...) per dim
  Eigen::VectorXd group_shift;  // defaults to (1.2, 0.0, ...)
  double noise_sd = 1.0;
};

/// Gaussian cluster per (group, label) cell; a desk-scale stand-in for Adult.
LabeledDataset synthesize_dataset(Eigen::Index n, std::uint64_t seed,
                                  const SyntheticParams& params);

enum class RateConstraintKind { demographic_parity, equal_opportunity, fpr_parity, tpr_parity };
enum class SurrogateKind { sigmoid, hinge };

/// Rate constraint with plug-in denominators frozen at construction.
struct RateConstraintSpec {
  RateConstraintKind kind = RateConstraintKind::demographic_parity;
  double epsilon = 0.03;
  SurrogateKind surrogate = SurrogateKind::sigmoid;
  double sigmoid_a = 2.0;
  double plug_in_rate_a1 = 0.0;  // P_hat of the conditioning event with A = 1
  double plug_in_rate_a0 = 0.0;
};

/// Freezes the plug-in denominators from `ds`; throws on an empty cell.
RateConstraintSpec make_rate_constraint(RateConstraintKind kind, double epsilon,
                                        SurrogateKind surrogate, double sigmoid_a,
                                        const LabeledDataset& ds);

/// Per-sample log-loss of sigma(theta^T x) against the labels.
Eigen::VectorXd logistic_objective_samples(const Eigen::VectorXd& theta,
                                           const LabeledDataset& ds);
/// Gradient of the mean log-loss.
Eigen::VectorXd logistic_gradient(const Eigen::VectorXd& theta, const LabeledDataset& ds);
/// Row i = gradient of the i-th per-sample loss.
Eigen::MatrixXd logistic_jacobian_samples(const Eigen::VectorXd& theta,
                                          const LabeledDataset& ds);

/// Plain logistic fit by gradient descent with backtracking; used to warm
/// start the constrained solves.
Eigen::VectorXd fit_logistic(const LabeledDataset& ds, int iterations);

/// Hard predictions 1{theta^T x >= 0} (ties to class 1).
Eigen::VectorXi predict(const Eigen::VectorXd& theta, const LabeledDataset& ds);
double error_rate(const Eigen::VectorXd& theta, const LabeledDataset& ds);

/// Per-sample values of the two one-sided constraints encoding
/// |rate(A=1) - rate(A=0)| <= eps; first = "A=1 minus A=0" side.
std::pair<Eigen::VectorXd, Eigen::VectorXd> rate_constraint_samples(
    const RateConstraintSpec& spec, const Eigen::VectorXd& theta, const LabeledDataset& ds);

/// Surrogate transfer functions: sigmoid h1(t) = (1 + e^{-a t})^{-1} and
/// hinge h2(t) = max{0, t + 1}.
double surrogate_value(SurrogateKind kind, double a, double t);

/// `side` 0 is the "A=1 minus A=0" one-sided constraint, 1 its mirror.
/// Differentiable surrogate of that side with its per-sample jacobian.
solver::SampleFunction rate_constraint_surrogate(const RateConstraintSpec& spec,
                                                 const LabeledDataset& ds, int side);
/// The true (indicator) side as a SampleFunction with zero jacobian.
solver::SampleFunction rate_constraint_true(const RateConstraintSpec& spec,
                                            const LabeledDataset& ds, int side);

/// floor(rate * n) rows drawn with replacement, deterministic per seed.
LabeledDataset bootstrap_replicate(const LabeledDataset& full, double rate, std::uint64_t seed);

/// Exact conditional-rate gap on the full dataset (the stand-in population).
double population_fairness_gap(const Eigen::VectorXd& theta, const LabeledDataset& full,
                               RateConstraintKind kind);

/// Logistic objective plus the two one-sided robust rate constraints with the
/// given radii (rho_pair(0) for the "A=1 minus A=0" side).
solver::RobustProgram make_fairness_program(const LabeledDataset& ds,
                                            const RateConstraintSpec& spec,
                                            const Eigen::Vector2d& rho_pair);

}  // namespace drocal::fairness
