#pragma once

#include "drocal/robust_eval.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace drocal::solver {

/// Per-sample function of theta: values(theta) is the length-n vector of
/// f(theta; Z_i), jacobian(theta) the n x d matrix of gradients.
struct SampleFunction {
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> values;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> jacobian;
};

struct ConstraintSpec {
  SampleFunction g;
  /// Differentiable stand-in used by the proxy path in place of g when
  /// minimizing over theta. The dual ascent update always uses g itself.
  std::optional<SampleFunction> surrogate;
  double rho = 0.0;
  bool differentiable = true;
  std::string name;
};

struct RobustProgram {
  SampleFunction objective;
  std::vector<ConstraintSpec> constraints;
  Eigen::VectorXd box_lower;
  Eigen::VectorXd box_upper;
  Eigen::Index sample_count = 0;
  Eigen::VectorXd theta_init;
};

struct SolverConfig {
  double eta0 = 2.0;          // dual step eta_t = eta0 / (1+t)^eta_decay
  double eta_decay = 0.5;
  /// Sign-adaptive per-constraint steps: eta_k grows 1.3x while G_k keeps its
  /// sign and halves on a flip. Overrides the power schedule when set;
  /// suited to duals whose curvature varies strongly along the path.
  bool adaptive_steps = false;
  double inner_tol = 1e-7;    // projected-gradient norm for the theta solve
  int inner_max_iter = 500;
  double dual_tol = 1e-6;     // sup-norm of the lambda step
  int dual_max_iter = 300;
  double feasibility_tol = 1e-5;
  double active_tol = 1e-3;   // two-stage active-set rule
  double inner_dual_tol = 1e-11;  // (mu, nu) solve tolerance
  std::uint64_t seed = 0;
  bool record_trace = true;
};

struct DualTraceEntry {
  int iteration = 0;
  Eigen::VectorXd lambda;
  Eigen::VectorXd robust_values;
  Eigen::VectorXd theta;
};

struct SolveResult {
  Eigen::VectorXd theta;
  Eigen::VectorXd lambda;
  std::vector<robust::InnerDualVars> inner;
  Eigen::VectorXd robust_values;  // robust constraint values at theta
  std::vector<DualTraceEntry> trace;
  int iterations = 0;
  bool converged = false;
  std::vector<int> active_set;  // filled by two_stage_solve
};

/// Thrown when dual ascent or the inner solve exhausts its iteration budget;
/// carries the partial result for diagnostics.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, SolveResult partial)
      : std::runtime_error(what), partial_(std::move(partial)) {}
  const SolveResult& partial() const { return partial_; }

 private:
  SolveResult partial_;
};

struct DualFunctionValue {
  Eigen::VectorXd theta;
  std::vector<robust::InnerDualVars> inner;
  double value = 0.0;
  int iterations = 0;
};

/// Evaluates the dual function at fixed lambda: jointly minimizes over theta
/// (projected onto the box) and the per-constraint inner variables. The
/// (mu_k, nu_k) blocks are minimized exactly at each theta, so the theta
/// gradient is the envelope gradient of the robust constraint values.
DualFunctionValue evaluate_dual_function(const RobustProgram& program,
                                         const Eigen::VectorXd& lambda,
                                         const SolverConfig& cfg);

/// Dual ascent: alternates dual-function evaluation with the projected
/// multiplier update lambda_{t+1,k} = [lambda_{t,k} + eta_t G_k(theta_t)]_+,
/// where G_k is the robust constraint value at the current minimizer.
/// Requires differentiable constraints.
SolveResult dual_ascent(const RobustProgram& program, const SolverConfig& cfg);

/// Same loop, but the theta minimization evaluates surrogates g~ in place of
/// non-differentiable g; the multiplier update keeps the true g.
SolveResult proxy_dual_ascent(const RobustProgram& program, const SolverConfig& cfg);

/// Stage 1 solves the SAA problem (all radii zero) and identifies actives by
/// lambda_k > active_tol or |G_k| <= active_tol; stage 2 re-solves with
/// positive_radii on the identified set and zero elsewhere.
SolveResult two_stage_solve(const RobustProgram& program, const Eigen::VectorXd& positive_radii,
                            const SolverConfig& cfg);

/// Cotter-style baseline: one seeded split; theta updates see part A, the
/// multiplier updates evaluate the constraints on part B.
SolveResult two_dataset_solve(const RobustProgram& program, double split_fraction,
                              const SolverConfig& cfg);

}  // namespace drocal::solver
