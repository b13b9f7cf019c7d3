#pragma once

#include "drocal/fairness.hpp"
#include "drocal/newsvendor.hpp"
#include "drocal/solver.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace drocal::harness {

enum class Method { saa, robust, two_stage, proxy, two_dataset };

std::string method_name(Method m);
Method method_from_name(const std::string& name);

struct OracleSettings {
  std::int64_t draws = 1000000;
  std::uint64_t seed_offset = 9001;
};

struct NewsvendorExperiment {
  newsvendor::NewsvendorSpec spec;
  double alpha = 0.05;  // per-constraint level; rho_k = z_{1-alpha}^2
  std::optional<double> joint_level;
  std::optional<Eigen::VectorXd> radii_override;
};

struct FairnessExperiment {
  bool synthetic = true;
  Eigen::Index synthetic_n = 12000;
  std::uint64_t population_seed = 4001;
  fairness::SyntheticParams synthetic_params;
  std::string csv_path;
  std::string schema_path;
  fairness::RateConstraintKind kind = fairness::RateConstraintKind::demographic_parity;
  double epsilon = 0.03;
  fairness::SurrogateKind surrogate = fairness::SurrogateKind::sigmoid;
  double sigmoid_a = 2.0;
  double bootstrap_rate = 0.5;
  double nominal_level = 0.9;  // joint satisfaction target of calibrated methods
  bool per_side_calibration = false;
  std::int64_t calibration_draws = 200000;
};

struct ExperimentConfig {
  std::variant<NewsvendorExperiment, FairnessExperiment> problem;
  Method method = Method::robust;
  Eigen::Index n = 3000;  // newsvendor training size
  int replicates = 100;
  std::uint64_t master_seed = 12345;
  OracleSettings oracle;
  solver::SolverConfig solver_cfg;
  int parallel = 0;  // 0 = hardware concurrency
  double max_failure_fraction = 0.01;
  bool include_failed_in_denominator = false;
  double split_fraction = 0.5;  // two_dataset
  std::string label;
};

struct ReplicateReport {
  int replicate = -1;
  Eigen::VectorXd theta;
  Eigen::VectorXd lambda;
  Eigen::VectorXd pop_values;
  Eigen::VectorXd pop_se;
  std::vector<int> satisfied;  // population value <= 0, per constraint
  std::vector<int> marginal;   // |value| within 2 oracle standard errors
  double objective = 0.0;      // training-sample mean objective at theta_hat
  double seconds = 0.0;
  bool failed = false;
  std::string failure;
  std::map<std::string, double> metrics;
};

struct FrequencyTable {
  Eigen::VectorXd per_constraint;
  Eigen::VectorXd per_constraint_se;
  double joint = 0.0;
  double joint_se = 0.0;
  Eigen::VectorXi marginal_counts;
  int counted = 0;
  int failed = 0;
};

struct RunResult {
  std::string label;
  std::vector<ReplicateReport> reports;
  FrequencyTable table;
};

/// splitmix64 of (master, index); the documented per-replicate seed rule.
std::uint64_t mix_seed(std::uint64_t master, std::uint64_t index);

/// Solver defaults tuned to the two problem families. The dual-step and
/// feasibility tolerances scale with the training size because the robust
/// constraint value of a piecewise-linear SAA objective (or a counting rate)
/// is quantized at the O(1/n) kink granularity.
solver::SolverConfig default_newsvendor_solver_config(Eigen::Index n);
solver::SolverConfig default_fairness_solver_config(Eigen::Index n_train);

RunResult run_experiment(const ExperimentConfig& cfg);

struct TheoremCheckResult {
  Eigen::VectorXd standardized;  // sqrt(n) E_P0[g(theta_r)] / sigma
  double mean = 0.0;
  double variance = 0.0;
  RunResult run;
};

/// Standardizes the population constraint values across replicates for
/// comparison against the N(-sqrt(rho), 1) limit; single-constraint
/// newsvendor problems only. population_sd is the oracle-supplied sigma.
TheoremCheckResult theorem_check(const ExperimentConfig& cfg, double population_sd);

void write_results_csv(const std::string& path, const std::vector<RunResult>& runs);
void write_frequencies_csv(const std::string& path, const std::vector<RunResult>& runs);
std::string results_json(const std::vector<RunResult>& runs);

}  // namespace drocal::harness
