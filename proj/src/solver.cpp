#include "drocal/solver.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <utility>

namespace drocal::solver {

namespace {

void validate_program(const RobustProgram& p) {
  if (p.constraints.empty())
    throw std::invalid_argument("solver: program needs at least one constraint");
  if (!p.objective.values || !p.objective.jacobian)
    throw std::invalid_argument("solver: objective callbacks missing");
  const Eigen::Index d = p.theta_init.size();
  if (p.box_lower.size() != d || p.box_upper.size() != d)
    throw std::invalid_argument("solver: parameter box does not match theta dimension");
  if ((p.box_lower.array() > p.box_upper.array()).any())
    throw std::invalid_argument("solver: empty parameter box");
  if (p.sample_count < 1) throw std::invalid_argument("solver: sample_count must be >= 1");
  for (const auto& c : p.constraints) {
    if (!c.g.values || !c.g.jacobian)
      throw std::invalid_argument("solver: constraint callbacks missing");
    if (!(c.rho >= 0.0) || !std::isfinite(c.rho))
      throw std::invalid_argument("solver: constraint radius must be finite and >= 0");
  }
}

bool needs_surrogates(const RobustProgram& p) {
  return std::any_of(p.constraints.begin(), p.constraints.end(),
                     [](const ConstraintSpec& c) { return !c.differentiable; });
}

class DualAscentEngine {
 public:
  DualAscentEngine(const RobustProgram& program, const SolverConfig& cfg, bool use_surrogate,
                   std::vector<int> theta_rows = {}, std::vector<int> lambda_rows = {})
      : prog_(program),
        cfg_(cfg),
        use_surrogate_(use_surrogate),
        rows_theta_(std::move(theta_rows)),
        rows_lambda_(std::move(lambda_rows)) {
    const auto k = static_cast<std::size_t>(prog_.constraints.size());
    inner_theta_.resize(k);
    inner_update_.resize(k);
    theta_ = project(prog_.theta_init);
  }

  SolveResult run() {
    const Eigen::Index k = static_cast<Eigen::Index>(prog_.constraints.size());
    Eigen::VectorXd lambda = Eigen::VectorXd::Zero(k);
    SolveResult result;
    bool converged = false;
    int t = 0;
    Eigen::VectorXd robust_values = Eigen::VectorXd::Zero(k);
    Eigen::VectorXd eta_k = Eigen::VectorXd::Constant(k, cfg_.eta0);
    Eigen::VectorXd prev_values = Eigen::VectorXd::Zero(k);
    for (; t < cfg_.dual_max_iter; ++t) {
      minimize_theta(lambda);
      robust_values = update_values(theta_);
      if (cfg_.record_trace)
        result.trace.push_back({t, lambda, robust_values, theta_});
      Eigen::VectorXd next(k);
      if (cfg_.adaptive_steps) {
        if (t >= 1) {
          for (Eigen::Index j = 0; j < k; ++j) {
            eta_k(j) *= robust_values(j) * prev_values(j) > 0.0 ? 1.3 : 0.5;
            eta_k(j) = std::clamp(eta_k(j), 1e-9 * cfg_.eta0, 1e6 * cfg_.eta0);
          }
        }
        prev_values = robust_values;
        next.resize(k);
        for (Eigen::Index j = 0; j < k; ++j) {
          // Trust region: the multiplier may at most grow by half of itself
          // plus a constant per iteration, so a lagging inner solve cannot
          // send it into exponential runaway.
          const double cap = 0.5 * lambda(j) + 0.5;
          const double raw = eta_k(j) * robust_values(j);
          const double delta = std::clamp(raw, -cap, cap);
          // Rescale (not shrink) a capped step so the rate stays proportionate
          // to the multiplier scale; a shrinking rate here would stall the
          // post-overshoot drain and fake convergence.
          if (delta != raw)
            eta_k(j) = cap / std::max(std::abs(robust_values(j)), 1e-300);
          next(j) = std::max(lambda(j) + delta, 0.0);
          if (next(j) == 0.0 && raw < 0.0) eta_k(j) = std::min(eta_k(j), cfg_.eta0);
        }
      } else {
        const double eta = cfg_.eta0 / std::pow(1.0 + t, cfg_.eta_decay);
        next = (lambda + eta * robust_values).cwiseMax(0.0);
      }
      const double step = (next - lambda).cwiseAbs().maxCoeff();
      lambda = next;
      // Under adaptive steps the multiplier move is quantized by the kink
      // spacing of the inner solution, so the step criterion is relative.
      const double step_tol =
          cfg_.adaptive_steps ? cfg_.dual_tol * (1.0 + lambda.lpNorm<Eigen::Infinity>())
                              : cfg_.dual_tol;
      if (step <= step_tol && robust_values.maxCoeff() <= cfg_.feasibility_tol) {
        converged = true;
        ++t;
        break;
      }
    }
    result.theta = theta_;
    result.lambda = lambda;
    result.inner = inner_update_;
    result.robust_values = robust_values;
    result.iterations = t;
    result.converged = converged;
    if (!converged)
      throw SolverError("dual ascent: no convergence within " +
                            std::to_string(cfg_.dual_max_iter) + " iterations (max step " +
                            std::to_string(cfg_.dual_tol) + " not reached)",
                        std::move(result));
    return result;
  }

  DualFunctionValue evaluate(const Eigen::VectorXd& lambda) {
    if ((lambda.array() < 0.0).any())
      throw std::invalid_argument("evaluate_dual_function: lambda must be nonnegative");
    const bool stationary = minimize_theta(lambda);
    DualFunctionValue out;
    out.theta = theta_;
    out.inner = inner_theta_;
    auto inner = inner_theta_;
    out.value = psi(theta_, lambda, inner);
    out.iterations = last_inner_iters_;
    if (!stationary) {
      SolveResult partial;
      partial.theta = theta_;
      partial.lambda = lambda;
      partial.inner = inner_theta_;
      throw SolverError("evaluate_dual_function: inner solve exhausted its budget", partial);
    }
    return out;
  }

 private:
  Eigen::VectorXd subset(Eigen::VectorXd v, const std::vector<int>& rows) const {
    if (rows.empty()) return v;  // moved through, no copy
    Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) out(static_cast<Eigen::Index>(i)) = v(rows[i]);
    return out;
  }

  Eigen::MatrixXd subset_rows(Eigen::MatrixXd m, const std::vector<int>& rows) const {
    if (rows.empty()) return m;
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
      out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
    return out;
  }

  Eigen::VectorXd project(Eigen::VectorXd th) const {
    return th.cwiseMax(prog_.box_lower).cwiseMin(prog_.box_upper);
  }

  const SampleFunction& eval_fn(std::size_t k) const {
    const auto& c = prog_.constraints[k];
    return (use_surrogate_ && c.surrogate) ? *c.surrogate : c.g;
  }

  double robust_value(const Eigen::VectorXd& vals, double rho,
                      robust::InnerDualVars& warm) const {
    if (rho == 0.0) return vals.mean();
    robust::RobustSupOptions opts;
    opts.tol = cfg_.inner_dual_tol;
    opts.warm_start = warm;
    auto sol = robust::robust_sup_dual({vals, rho}, opts);
    warm = sol.inner;
    return sol.value;
  }

  // Psi(theta; lambda) = mean f + sum_k lambda_k R_k(theta), the exact
  // partial minimum of the dual objective over the inner variables.
  double psi(const Eigen::VectorXd& th, const Eigen::VectorXd& lambda,
             std::vector<robust::InnerDualVars>& inner) const {
    double value = subset(prog_.objective.values(th), rows_theta_).mean();
    for (std::size_t k = 0; k < prog_.constraints.size(); ++k) {
      if (lambda(static_cast<Eigen::Index>(k)) == 0.0) continue;
      Eigen::VectorXd vals = subset(eval_fn(k).values(th), rows_theta_);
      value += lambda(static_cast<Eigen::Index>(k)) *
               robust_value(vals, prog_.constraints[k].rho, inner[k]);
    }
    return value;
  }

  double psi_with_grad(const Eigen::VectorXd& th, const Eigen::VectorXd& lambda,
                       std::vector<robust::InnerDualVars>& inner, Eigen::VectorXd& grad) const {
    Eigen::VectorXd fv = subset(prog_.objective.values(th), rows_theta_);
    Eigen::MatrixXd fj = subset_rows(prog_.objective.jacobian(th), rows_theta_);
    double value = fv.mean();
    grad = fj.colwise().mean().transpose();
    for (std::size_t k = 0; k < prog_.constraints.size(); ++k) {
      const double lk = lambda(static_cast<Eigen::Index>(k));
      if (lk == 0.0) continue;
      const auto& fn = eval_fn(k);
      Eigen::VectorXd vals = subset(fn.values(th), rows_theta_);
      Eigen::MatrixXd jac = subset_rows(fn.jacobian(th), rows_theta_);
      const double rho = prog_.constraints[k].rho;
      if (rho == 0.0) {
        value += lk * vals.mean();
        grad += lk * jac.colwise().mean().transpose();
      } else {
        robust::RobustSupOptions opts;
        opts.tol = cfg_.inner_dual_tol;
        opts.warm_start = inner[k];
        auto sol = robust::robust_sup_dual({vals, rho}, opts);
        inner[k] = sol.inner;
        value += lk * sol.value;
        grad += lk * robust::robust_sup_gradient(vals, jac, sol);
      }
    }
    return value;
  }

  // Projected gradient descent with backtracking on Psi. Returns true when a
  // stationary point was reached (or the line search resolved to one).
  bool minimize_theta(const Eigen::VectorXd& lambda) {
    Eigen::VectorXd grad(theta_.size());
    double value = 0.0;
    int it = 0;
    // The adaptive step can end a solve collapsed onto a kink; start the next
    // solve from a workable size or the iterate cannot track the new lambda.
    step_init_ = std::clamp(step_init_, 0.05, 1e3);
    for (; it < cfg_.inner_max_iter; ++it) {
      value = psi_with_grad(theta_, lambda, inner_theta_, grad);
      Eigen::VectorXd pg = theta_ - project(theta_ - grad);
      if (pg.norm() <= cfg_.inner_tol) {
        last_inner_iters_ = it;
        return true;
      }
      bool accepted = false;
      double step = step_init_;
      for (int bt = 0; bt < 40; ++bt) {
        Eigen::VectorXd theta_t = project(theta_ - step * grad);
        const double pred = grad.dot(theta_ - theta_t);
        if (pred <= 0.0) break;  // projection pinned every coordinate
        auto trial_inner = inner_theta_;
        const double trial = psi(theta_t, lambda, trial_inner);
        if (trial <= value - 1e-4 * pred) {
          theta_ = std::move(theta_t);
          inner_theta_ = std::move(trial_inner);
          step_init_ = (bt == 0) ? step * 2.0 : step;
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) {
        // Line search exhausted: typical at a kink of a piecewise-linear
        // objective. Treat as resolved if reasonably stationary.
        last_inner_iters_ = it;
        Eigen::VectorXd pg2 = theta_ - project(theta_ - grad);
        return pg2.norm() <= 100.0 * cfg_.inner_tol;
      }
    }
    last_inner_iters_ = it;
    return false;
  }

  // Robust constraint values of the true g on the update rows; these drive
  // the multiplier step and the feasibility check.
  Eigen::VectorXd update_values(const Eigen::VectorXd& th) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(prog_.constraints.size()));
    for (std::size_t k = 0; k < prog_.constraints.size(); ++k) {
      Eigen::VectorXd vals = subset(prog_.constraints[k].g.values(th), rows_lambda_);
      out(static_cast<Eigen::Index>(k)) =
          robust_value(vals, prog_.constraints[k].rho, inner_update_[k]);
    }
    return out;
  }

  const RobustProgram& prog_;
  SolverConfig cfg_;
  bool use_surrogate_;
  std::vector<int> rows_theta_;
  std::vector<int> rows_lambda_;
  Eigen::VectorXd theta_;
  std::vector<robust::InnerDualVars> inner_theta_;
  std::vector<robust::InnerDualVars> inner_update_;
  double step_init_ = 1.0;
  int last_inner_iters_ = 0;
};

}  // namespace

DualFunctionValue evaluate_dual_function(const RobustProgram& program,
                                         const Eigen::VectorXd& lambda,
                                         const SolverConfig& cfg) {
  validate_program(program);
  if (lambda.size() != static_cast<Eigen::Index>(program.constraints.size()))
    throw std::invalid_argument("evaluate_dual_function: lambda length mismatch");
  DualAscentEngine engine(program, cfg, needs_surrogates(program));
  return engine.evaluate(lambda);
}

SolveResult dual_ascent(const RobustProgram& program, const SolverConfig& cfg) {
  validate_program(program);
  if (needs_surrogates(program))
    throw std::invalid_argument(
        "dual_ascent: program has non-differentiable constraints; use proxy_dual_ascent");
  DualAscentEngine engine(program, cfg, /*use_surrogate=*/false);
  return engine.run();
}

SolveResult proxy_dual_ascent(const RobustProgram& program, const SolverConfig& cfg) {
  validate_program(program);
  for (const auto& c : program.constraints) {
    if (!c.differentiable && !c.surrogate)
      throw std::invalid_argument("proxy_dual_ascent: non-differentiable constraint '" + c.name +
                                  "' has no surrogate");
  }
  DualAscentEngine engine(program, cfg, /*use_surrogate=*/true);
  return engine.run();
}

SolveResult two_stage_solve(const RobustProgram& program, const Eigen::VectorXd& positive_radii,
                            const SolverConfig& cfg) {
  validate_program(program);
  const auto k = static_cast<Eigen::Index>(program.constraints.size());
  if (positive_radii.size() != k)
    throw std::invalid_argument("two_stage_solve: radii length mismatch");
  if ((positive_radii.array() <= 0.0).any())
    throw std::invalid_argument("two_stage_solve: stage-2 radii must be positive");
  const bool proxy = needs_surrogates(program);

  RobustProgram stage1 = program;
  for (auto& c : stage1.constraints) c.rho = 0.0;
  DualAscentEngine first(stage1, cfg, proxy);
  SolveResult s1 = first.run();

  std::vector<int> active;
  for (Eigen::Index j = 0; j < k; ++j) {
    if (s1.lambda(j) > cfg.active_tol || std::abs(s1.robust_values(j)) <= cfg.active_tol)
      active.push_back(static_cast<int>(j));
  }
  if (active.empty()) {
    s1.active_set = {};
    return s1;  // nothing to robustify; stage 2 would repeat stage 1 exactly
  }

  RobustProgram stage2 = program;
  for (auto& c : stage2.constraints) c.rho = 0.0;
  for (int j : active) stage2.constraints[static_cast<std::size_t>(j)].rho = positive_radii(j);
  stage2.theta_init = s1.theta;
  DualAscentEngine second(stage2, cfg, proxy);
  SolveResult s2 = second.run();
  s2.active_set = active;
  return s2;
}

SolveResult two_dataset_solve(const RobustProgram& program, double split_fraction,
                              const SolverConfig& cfg) {
  validate_program(program);
  if (!(split_fraction > 0.0 && split_fraction < 1.0))
    throw std::invalid_argument("two_dataset_solve: split_fraction must lie in (0, 1)");
  const int n = static_cast<int>(program.sample_count);
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(cfg.seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  const int na = static_cast<int>(std::floor(split_fraction * n));
  if (na < 1 || na >= n)
    throw std::invalid_argument("two_dataset_solve: split leaves an empty part");
  std::vector<int> part_a(perm.begin(), perm.begin() + na);
  std::vector<int> part_b(perm.begin() + na, perm.end());
  std::sort(part_a.begin(), part_a.end());
  std::sort(part_b.begin(), part_b.end());
  DualAscentEngine engine(program, cfg, needs_surrogates(program), std::move(part_a),
                          std::move(part_b));
  return engine.run();
}

}  // namespace drocal::solver
