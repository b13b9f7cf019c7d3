#include "drocal/robust_eval.hpp"

#include "drocal/divergence.hpp"
#include "drocal/probstats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace drocal::robust {

namespace {

constexpr double kMuFloor = 1e-12;

void validate(const ConstraintValues& cv) {
  if (cv.values.size() < 1) throw std::invalid_argument("robust_eval: empty value vector");
  if (!(cv.rho >= 0.0) || !std::isfinite(cv.rho))
    throw std::invalid_argument("robust_eval: rho must be finite and nonnegative");
}

/// Dual objective h(mu, nu) = (1/n) sum_i mu phi*((v_i - nu)/mu) + mu rho/n + nu.
double dual_objective(const Eigen::VectorXd& v, double rho, double mu, double nu) {
  const double n = static_cast<double>(v.size());
  double acc = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    acc += divergence::perspective_phi_conjugate(v(i) - nu, mu);
  return acc / n + mu * rho / n + nu;
}

void dual_gradient(const Eigen::VectorXd& v, double rho, double mu, double nu, double& dmu,
                   double& dnu) {
  const double n = static_cast<double>(v.size());
  double acc_mu = 0.0, acc_nu = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double s = v(i) - nu;
    if (s >= -2.0 * mu) {
      const double t = s / mu;
      acc_mu += 0.25 * t * t;
      acc_nu += 1.0 + 0.5 * t;
    } else {
      acc_mu += 1.0;
    }
  }
  dmu = rho / n - acc_mu / n;
  dnu = 1.0 - acc_nu / n;
}

/// Values sorted descending with prefix sums, so the exact coordinate
/// minimizers can be evaluated from branch counts alone.
struct SortedView {
  std::vector<double> v;       // descending
  std::vector<double> sum;     // sum[m] = v[0] + ... + v[m-1]
  std::vector<double> sum_sq;  // likewise for squares

  explicit SortedView(const Eigen::VectorXd& values) {
    v.assign(values.data(), values.data() + values.size());
    std::sort(v.begin(), v.end(), std::greater<double>());
    sum.resize(v.size() + 1, 0.0);
    sum_sq.resize(v.size() + 1, 0.0);
    for (std::size_t i = 0; i < v.size(); ++i) {
      sum[i + 1] = sum[i] + v[i];
      sum_sq[i + 1] = sum_sq[i] + v[i] * v[i];
    }
  }

  // Number of entries with v_i >= cut.
  std::size_t count_at_least(double cut) const {
    return static_cast<std::size_t>(
        std::upper_bound(v.begin(), v.end(), cut, std::greater<double>()) - v.begin());
  }

  // sum over {v_i >= cut} of (v_i - nu)^2 given the count m.
  double branch_sum_sq(std::size_t m, double nu) const {
    const double md = static_cast<double>(m);
    return sum_sq[m] - 2.0 * nu * sum[m] + md * nu * nu;
  }
};

// Exact minimization of h over nu at fixed mu. Stationarity
//   1 = (1/n) sum_i phi*'((v_i - nu)/mu)
// is piecewise linear and nondecreasing in nu; a branch-pattern walk with a
// bisection safeguard finds the root.
double minimize_nu(const SortedView& sv, double mu, double nu0) {
  const double n = static_cast<double>(sv.v.size());
  auto residual = [&](double nu) {
    const std::size_t m = sv.count_at_least(nu - 2.0 * mu);
    const double md = static_cast<double>(m);
    return 1.0 - md / n - (sv.sum[m] - md * nu) / (2.0 * mu * n);
  };
  double hi = sv.v.front() + 2.0 * mu;  // residual = 1 there
  double lo = std::min(nu0, sv.v.back());
  double span = std::max(1.0, sv.v.front() - sv.v.back()) + 2.0 * mu;
  while (residual(lo) > 0.0) {
    lo -= span;
    span *= 2.0;
  }
  for (int pass = 0; pass < 200; ++pass) {
    const std::size_t m = sv.count_at_least(std::clamp(nu0, lo, hi) - 2.0 * mu);
    double cand;
    if (m > 0) {
      const double md = static_cast<double>(m);
      cand = (sv.sum[m] - 2.0 * mu * (n - md)) / md;
      if (m == sv.count_at_least(cand - 2.0 * mu) && cand >= lo && cand <= hi) return cand;
      if (!(cand > lo && cand < hi)) cand = 0.5 * (lo + hi);
    } else {
      cand = 0.5 * (lo + hi);
    }
    if (residual(cand) > 0.0)
      hi = cand;
    else
      lo = cand;
    nu0 = cand;
    if (hi - lo <= 1e-15 * (1.0 + std::abs(hi))) break;
  }
  return 0.5 * (lo + hi);
}

// Exact minimization of h over mu >= kMuFloor at fixed nu. Stationarity
//   rho/n = (1/n) sum_i q_i(mu),  q_i = min{ (v_i - nu)^2 / (4 mu^2), 1 },
// has a nondecreasing-in-mu left-hand residual; branch-pattern walk with a
// bisection safeguard.
double minimize_mu(const SortedView& sv, double rho, double nu, double mu0) {
  const double n = static_cast<double>(sv.v.size());
  auto residual = [&](double mu) {
    const std::size_t m = sv.count_at_least(nu - 2.0 * mu);
    const double md = static_cast<double>(m);
    return rho / n - (sv.branch_sum_sq(m, nu) / (4.0 * mu * mu) + (n - md)) / n;
  };
  if (residual(kMuFloor) >= 0.0) return kMuFloor;
  double lo = kMuFloor;
  double hi = std::max(mu0, 1.0);
  int guard = 0;
  while (residual(hi) < 0.0 && guard++ < 400) {
    lo = hi;
    hi *= 2.0;
  }
  double mu = std::clamp(mu0, lo, hi);
  for (int pass = 0; pass < 200; ++pass) {
    const std::size_t m = sv.count_at_least(nu - 2.0 * mu);
    const double md = static_cast<double>(m);
    const double ssq = sv.branch_sum_sq(m, nu);
    double cand = 0.5 * (lo + hi);
    if (rho > n - md && ssq > 0.0) {
      const double exact = 0.5 * std::sqrt(ssq / (rho - (n - md)));
      if (exact >= lo && exact <= hi) {
        if (sv.count_at_least(nu - 2.0 * exact) == m) return std::max(exact, kMuFloor);
        cand = exact;
      }
    }
    if (residual(cand) < 0.0)
      lo = cand;
    else
      hi = cand;
    mu = cand;
    if (hi - lo <= 1e-15 * (1.0 + hi)) break;
  }
  return std::max(0.5 * (lo + hi), kMuFloor);
}

}  // namespace

RobustSupResult robust_sup_dual(const ConstraintValues& cv, const RobustSupOptions& opts) {
  validate(cv);
  if (!(opts.tol > 0.0)) throw std::invalid_argument("robust_sup_dual: tol must be positive");
  const Eigen::VectorXd& v = cv.values;
  const double n = static_cast<double>(v.size());
  const auto [mean, var] = stats::empirical_moments(v);

  RobustSupResult res;
  if (cv.rho * var <= 1e-28 * (1.0 + mean * mean)) {
    // Only the empirical distribution matters (rho = 0) or reweighting a
    // constant (variance = 0): the worst case is the sample mean.
    res.value = mean;
    res.inner = {1.0, mean};
    res.regime = SupRegime::uniform;
    return res;
  }
  if (cv.rho >= n * (n - 1.0)) {
    // The ball admits a point mass on the largest value; the infimum is
    // attained in the mu -> 0 limit along nu = max - 2(n-1) mu.
    res.value = v.maxCoeff();
    res.inner = {kMuFloor, v.maxCoeff() - 2.0 * (n - 1.0) * kMuFloor};
    res.regime = SupRegime::point_mass;
    return res;
  }

  // Closed-form stationary point of the all-interior branch. When no
  // likelihood ratio hits zero at it, it is the exact inner minimizer and
  // the value reduces to the variance expansion.
  const double mu_star = 0.5 * std::sqrt(n * var / cv.rho);
  if (mu_star >= kMuFloor && v.minCoeff() - mean >= -2.0 * mu_star) {
    res.value = mean + std::sqrt(cv.rho * var / n);
    res.inner = {mu_star, mean};
    res.iterations = 0;
    return res;
  }

  const double scale = std::abs(mean) + std::sqrt(var) + 1.0;
  double mu = std::max(mu_star, kMuFloor);
  double nu = mean;
  if (opts.warm_start) {
    mu = std::max(opts.warm_start->mu, kMuFloor);
    nu = opts.warm_start->nu;
  }

  double value = dual_objective(v, cv.rho, mu, nu);
  double step = 1.0;
  int iters = 0;
  const int gd_budget = std::min(opts.max_iter, 200);
  const double gtol = std::max(opts.tol, 1e-13);
  for (; iters < gd_budget; ++iters) {
    double dmu, dnu;
    dual_gradient(v, cv.rho, mu, nu, dmu, dnu);
    if (mu <= kMuFloor && dmu > 0.0) dmu = 0.0;  // outward gradient at the floor
    if (std::hypot(dmu, dnu) <= gtol * scale) break;
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt) {
      const double mu_t = std::max(mu - step * dmu, kMuFloor);
      const double nu_t = nu - step * dnu;
      const double trial = dual_objective(v, cv.rho, mu_t, nu_t);
      const double pred = (mu - mu_t) * dmu + (nu - nu_t) * dnu;
      if (trial <= value - 1e-4 * pred) {
        mu = mu_t;
        nu = nu_t;
        value = trial;
        if (bt == 0) step *= 2.0;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // stalled at line-search resolution
  }

  // Alternating exact coordinate minimization finishes the solve; each
  // subproblem is one-dimensional, convex, and piecewise analytic.
  SortedView sv(v);
  for (int round = 0; round < 200; ++round) {
    nu = minimize_nu(sv, mu, nu);
    mu = minimize_mu(sv, cv.rho, nu, mu);
    const double next = dual_objective(v, cv.rho, mu, nu);
    ++iters;
    if (round >= 1 && value - next <= 0.01 * opts.tol * (1.0 + std::abs(next))) {
      value = std::min(value, next);
      break;
    }
    value = std::min(value, next);
  }

  res.value = value;
  res.inner = {mu, nu};
  res.iterations = iters;
  res.converged = true;
  return res;
}

PrimalOracleResult robust_sup_primal_oracle(const ConstraintValues& cv) {
  validate(cv);
  const Eigen::Index n = cv.values.size();
  if (n > 10000)
    throw std::invalid_argument("robust_sup_primal_oracle: oracle capped at n <= 1e4");
  const double nd = static_cast<double>(n);
  const Eigen::VectorXd& g = cv.values;
  const double rho = cv.rho;

  PrimalOracleResult res;
  res.weights = Eigen::VectorXd::Constant(n, 1.0 / nd);
  const auto [mean, var] = stats::empirical_moments(g);
  if (rho <= 0.0 || var <= 1e-28 * (1.0 + mean * mean)) {
    res.value = mean;
    return res;
  }

  // Point mass admissible: its divergence is n(n-1) in the sum (n p_i - 1)^2
  // normalization. Ties go to the lowest index.
  Eigen::Index argmax = 0;
  for (Eigen::Index i = 1; i < n; ++i) {
    if (g(i) > g(argmax)) argmax = i;
  }
  if (rho >= nd * (nd - 1.0)) {
    res.weights.setZero();
    res.weights(argmax) = 1.0;
    res.value = g(argmax);
    return res;
  }

  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return g(a) > g(b); });
  std::vector<double> prefix(n + 1, 0.0);
  for (Eigen::Index i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + g(order[i]);

  // Water-filling solution for a fixed quadratic multiplier beta; returns the
  // divergence sum (n p_i - 1)^2 of the optimal weights.
  auto solve_weights = [&](double beta, Eigen::VectorXd& p) {
    Eigen::Index m = n;
    double gamma = prefix[n] / nd;  // full-support fallback
    for (Eigen::Index mm = 1; mm <= n; ++mm) {
      const double md = static_cast<double>(mm);
      const double cand = (prefix[mm] - 2.0 * beta * nd * (nd - md)) / md;
      const bool lo_ok = g(order[mm - 1]) > cand - 2.0 * beta * nd;
      const bool hi_ok = (mm == n) || (g(order[mm]) <= cand - 2.0 * beta * nd);
      if (lo_ok && hi_ok) {
        m = mm;
        gamma = cand;
        break;
      }
    }
    p.setZero();
    double div_acc = static_cast<double>(n - m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const double u = (g(order[i]) - gamma) / (2.0 * beta * nd);
      p(order[i]) = (1.0 + u) / nd;
      div_acc += u * u;
    }
    return div_acc;
  };

  Eigen::VectorXd p(n);
  double beta_hi = std::max(1.0, (g(argmax) - g.minCoeff()) * nd);
  while (solve_weights(beta_hi, p) > rho) beta_hi *= 4.0;
  double beta_lo = beta_hi;
  while (beta_lo > 1e-280 && solve_weights(beta_lo, p) < rho) beta_lo *= 0.25;
  if (solve_weights(beta_lo, p) < rho) {
    // Divergence saturates below rho (ties at the max): the ball constraint
    // is slack and p already holds the limiting argmax-supported weights.
    res.weights = p;
    res.value = p.dot(g);
    res.multiplier = 0.0;
    return res;
  }
  for (int it = 0; it < 300 && (beta_hi - beta_lo) > 1e-9 * (1.0 + beta_hi); ++it) {
    const double mid = 0.5 * (beta_lo + beta_hi);
    if (solve_weights(mid, p) > rho)
      beta_lo = mid;
    else
      beta_hi = mid;
  }
  const double beta = 0.5 * (beta_lo + beta_hi);
  solve_weights(beta, p);
  res.weights = p;
  res.value = p.dot(g);
  res.multiplier = beta;
  return res;
}

double variance_expansion(const ConstraintValues& cv) {
  validate(cv);
  if (cv.values.size() < 2)
    throw std::invalid_argument("variance_expansion: need at least 2 samples");
  const auto [mean, var] = stats::empirical_moments(cv.values);
  return mean + std::sqrt(cv.rho * var / static_cast<double>(cv.values.size()));
}

Eigen::VectorXd worst_case_weights(const Eigen::VectorXd& values,
                                   const RobustSupResult& solution) {
  if (solution.regime == SupRegime::uniform) return Eigen::VectorXd::Ones(values.size());
  if (solution.regime == SupRegime::point_mass) {
    Eigen::Index argmax = 0;
    for (Eigen::Index i = 1; i < values.size(); ++i)
      if (values(i) > values(argmax)) argmax = i;
    Eigen::VectorXd w = Eigen::VectorXd::Zero(values.size());
    w(argmax) = static_cast<double>(values.size());
    return w;
  }
  Eigen::ArrayXd t = (values.array() - solution.inner.nu) / solution.inner.mu;
  return (1.0 + 0.5 * t).max(0.0).matrix();
}

Eigen::VectorXd robust_sup_gradient(const Eigen::VectorXd& values,
                                    const Eigen::MatrixXd& jacobian,
                                    const RobustSupResult& solution) {
  if (jacobian.rows() != values.size())
    throw std::invalid_argument("robust_sup_gradient: jacobian/value size mismatch");
  const Eigen::VectorXd w = worst_case_weights(values, solution);
  return jacobian.transpose() * w / static_cast<double>(values.size());
}

}  // namespace drocal::robust
