#pragma once

#include <Eigen/Core>

#include <optional>

namespace drocal::robust {

/// Per-sample constraint values g(theta; Z_i) at a fixed theta together with
/// the robustness radius. rho follows the calibration convention: the
/// ambiguity ball is { P : D_chi2(P || Pn) <= rho / n }.
struct ConstraintValues {
  Eigen::VectorXd values;
  double rho = 0.0;
};

/// Inner dual variables of the perspective-conjugate form.
struct InnerDualVars {
  double mu = 1.0;
  double nu = 0.0;
};

/// Which branch of the dual solve produced the result. `uniform` covers
/// rho * variance = 0 (worst case is the sample mean), `point_mass` covers
/// rho >= n(n-1) (worst case is a point mass on the largest value), and
/// `interior` is everything in between.
enum class SupRegime { uniform, point_mass, interior };

struct RobustSupResult {
  double value = 0.0;
  InnerDualVars inner;
  SupRegime regime = SupRegime::interior;
  int iterations = 0;
  bool converged = true;
};

struct PrimalOracleResult {
  double value = 0.0;
  Eigen::VectorXd weights;
  /// KKT multiplier of the quadratic divergence constraint (0 when slack).
  double multiplier = 0.0;
};

struct RobustSupOptions {
  double tol = 1e-10;
  int max_iter = 2000;
  std::optional<InnerDualVars> warm_start;
};

/// Worst-case mean sup_{D(P||Pn) <= rho/n} E_P[g] through the dual form
///   inf_{mu >= 0, nu} (1/n) sum_i mu phi*((g_i - nu)/mu) + mu rho/n + nu,
/// minimized by gradient descent with backtracking from the closed-form
/// warm start, then polished by exact coordinate minimization.
RobustSupResult robust_sup_dual(const ConstraintValues& cv, const RobustSupOptions& opts = {});

/// Exact primal solution of max_p { sum p_i g_i : sum (n p_i - 1)^2 <= rho,
/// p in the simplex } by bisection on the KKT multiplier of the quadratic
/// constraint with active-set handling of p_i >= 0. Intended as an
/// independent oracle; n is capped at 1e4.
PrimalOracleResult robust_sup_primal_oracle(const ConstraintValues& cv);

/// Variance-expansion value: mean + sqrt(rho * variance / n) with the
/// population variance. Coincides with the exact worst case whenever the
/// worst-case weights stay nonnegative.
double variance_expansion(const ConstraintValues& cv);

/// Envelope gradient of the robust value with respect to theta, evaluated at
/// the inner minimizer: (1/n) sum_i phi*'((g_i - nu*)/mu*) grad g_i. jacobian
/// is n x d with row i = grad_theta g(theta; Z_i).
Eigen::VectorXd robust_sup_gradient(const Eigen::VectorXd& values,
                                    const Eigen::MatrixXd& jacobian,
                                    const RobustSupResult& solution);

/// Worst-case weights n p_i = phi*'((g_i - nu*)/mu*) implied by an inner
/// solution (uniform in the degenerate case).
Eigen::VectorXd worst_case_weights(const Eigen::VectorXd& values,
                                   const RobustSupResult& solution);

}  // namespace drocal::robust
