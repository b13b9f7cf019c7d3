#include "drocal/harness.hpp"

#include "drocal/calibration.hpp"

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <thread>

namespace drocal::harness {

namespace {

using json = nlohmann::json;

double binomial_se(double p, int n) {
  if (n <= 0) return 0.0;
  return std::sqrt(std::max(p * (1.0 - p), 0.0) / static_cast<double>(n));
}

FrequencyTable aggregate(const std::vector<ReplicateReport>& reports, Eigen::Index k,
                         bool include_failed) {
  FrequencyTable table;
  table.per_constraint = Eigen::VectorXd::Zero(k);
  table.per_constraint_se = Eigen::VectorXd::Zero(k);
  table.marginal_counts = Eigen::VectorXi::Zero(k);
  double joint_hits = 0.0;
  for (const auto& rep : reports) {
    if (rep.failed) {
      ++table.failed;
      if (!include_failed) continue;
    }
    ++table.counted;
    if (rep.failed) continue;  // counted in the denominator, never satisfied
    bool all = true;
    for (Eigen::Index j = 0; j < k; ++j) {
      const bool ok = rep.satisfied[static_cast<std::size_t>(j)] != 0;
      table.per_constraint(j) += ok ? 1.0 : 0.0;
      all = all && ok;
      table.marginal_counts(j) += rep.marginal[static_cast<std::size_t>(j)];
    }
    joint_hits += all ? 1.0 : 0.0;
  }
  if (table.counted > 0) {
    table.per_constraint /= static_cast<double>(table.counted);
    table.joint = joint_hits / static_cast<double>(table.counted);
  }
  for (Eigen::Index j = 0; j < k; ++j)
    table.per_constraint_se(j) = binomial_se(table.per_constraint(j), table.counted);
  table.joint_se = binomial_se(table.joint, table.counted);
  return table;
}

void run_parallel(int replicates, int threads, const std::function<void(int)>& body) {
  if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
  threads = std::max(1, std::min(threads, replicates));
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (int r = next.fetch_add(1); r < replicates; r = next.fetch_add(1)) body(r);
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads - 1));
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
}

// Normalizes the dual step by the initial constraint magnitude so one eta0
// serves problems whose constraint values differ by orders of magnitude.
void normalize_eta(solver::SolverConfig& scfg, const solver::RobustProgram& program) {
  double g0 = 0.0;
  for (const auto& c : program.constraints)
    g0 = std::max(g0, std::abs(c.g.values(program.theta_init).mean()));
  scfg.eta0 /= std::max(0.05, g0);
  // The constraint-value jitter at the optimum scales with the constraint
  // magnitude over the kink spacing; keep the feasibility tolerance above it.
  scfg.feasibility_tol = std::max(
      scfg.feasibility_tol,
      0.3 * std::max(1.0, g0) / static_cast<double>(program.sample_count));
}

Eigen::VectorXd newsvendor_radii(const NewsvendorExperiment& exp, Eigen::Index k) {
  if (exp.radii_override) {
    if (exp.radii_override->size() != k)
      throw std::invalid_argument("harness: radii override length mismatch");
    return *exp.radii_override;
  }
  const double rho = calibration::radius_for_level({exp.alpha, false});
  return Eigen::VectorXd::Constant(k, rho);
}

struct NewsvendorRunner {
  const ExperimentConfig& cfg;
  const NewsvendorExperiment& exp;

  ReplicateReport run_one(int r) const {
    ReplicateReport rep;
    rep.replicate = r;
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t seed = mix_seed(cfg.master_seed, static_cast<std::uint64_t>(r));
    Eigen::MatrixXd samples = newsvendor::sample_demand(exp.spec, cfg.n, seed);
    const Eigen::Index k = static_cast<Eigen::Index>(exp.spec.groups.size());

    solver::SolverConfig scfg = cfg.solver_cfg;
    scfg.seed = seed;
    solver::SolveResult sol;
    switch (cfg.method) {
      case Method::saa: {
        auto program = newsvendor::make_program(exp.spec, samples, Eigen::VectorXd::Zero(k));
        normalize_eta(scfg, program);
        sol = solver::dual_ascent(program, scfg);
        break;
      }
      case Method::robust: {
        auto program = newsvendor::make_program(exp.spec, samples, newsvendor_radii(exp, k));
        normalize_eta(scfg, program);
        sol = solver::dual_ascent(program, scfg);
        break;
      }
      case Method::proxy: {
        auto program = newsvendor::make_program(exp.spec, samples, newsvendor_radii(exp, k));
        normalize_eta(scfg, program);
        sol = solver::proxy_dual_ascent(program, scfg);
        break;
      }
      case Method::two_stage: {
        auto program = newsvendor::make_program(exp.spec, samples, Eigen::VectorXd::Zero(k));
        normalize_eta(scfg, program);
        sol = solver::two_stage_solve(program, newsvendor_radii(exp, k), scfg);
        break;
      }
      case Method::two_dataset: {
        // Cotter-style baseline: held-out multiplier updates, no robustness.
        auto program = newsvendor::make_program(exp.spec, samples, Eigen::VectorXd::Zero(k));
        normalize_eta(scfg, program);
        sol = solver::two_dataset_solve(program, cfg.split_fraction, scfg);
        break;
      }
    }

    rep.theta = sol.theta;
    rep.lambda = sol.lambda;
    rep.pop_values.resize(k);
    rep.pop_se.resize(k);
    rep.satisfied.resize(static_cast<std::size_t>(k));
    rep.marginal.resize(static_cast<std::size_t>(k));
    auto pvs = newsvendor::population_constraints(exp.spec, sol.theta, cfg.oracle.draws,
                                                  mix_seed(seed, cfg.oracle.seed_offset));
    for (Eigen::Index j = 0; j < k; ++j) {
      const auto& pv = pvs[static_cast<std::size_t>(j)];
      rep.pop_values(j) = pv.value;
      rep.pop_se(j) = pv.standard_error;
      rep.satisfied[static_cast<std::size_t>(j)] = pv.value <= 0.0 ? 1 : 0;
      rep.marginal[static_cast<std::size_t>(j)] =
          (pv.standard_error > 0.0 && std::abs(pv.value) <= 2.0 * pv.standard_error) ? 1 : 0;
    }
    rep.objective = newsvendor::objective_samples(exp.spec, sol.theta, samples).mean();
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
  }
};

struct FairnessRunner {
  const ExperimentConfig& cfg;
  const FairnessExperiment& exp;
  const fairness::LabeledDataset& full;

  Eigen::Vector2d calibrated_radii(const fairness::RateConstraintSpec& spec,
                                   const fairness::LabeledDataset& ds,
                                   const Eigen::VectorXd& theta_ref,
                                   const std::vector<int>& active, std::uint64_t seed) const {
    Eigen::Vector2d radii = Eigen::Vector2d::Zero();
    if (active.empty()) return radii;
    const double level = exp.nominal_level;
    if (exp.per_side_calibration || active.size() == 1) {
      const double rho = calibration::radius_for_level({1.0 - level, false});
      for (int j : active) radii(j) = rho;
      return radii;
    }
    // Both sides active: joint search over the correlation of the active
    // constraint values at the reference solution (for the mirrored pair the
    // estimate is exactly -1).
    Eigen::MatrixXd vals(ds.features.rows(), 2);
    vals.col(0) = fairness::rate_constraint_true(spec, ds, 0).values(theta_ref);
    vals.col(1) = fairness::rate_constraint_true(spec, ds, 1).values(theta_ref);
    auto corr = stats::correlation_matrix(vals);
    auto rv = calibration::joint_radius_search(corr, level, exp.calibration_draws, seed);
    radii(0) = rv.rho(0);
    radii(1) = rv.rho(1);
    return radii;
  }

  ReplicateReport run_one(int r) const {
    ReplicateReport rep;
    rep.replicate = r;
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t seed = mix_seed(cfg.master_seed, static_cast<std::uint64_t>(r));
    auto ds = fairness::bootstrap_replicate(full, exp.bootstrap_rate, seed);
    auto spec = fairness::make_rate_constraint(exp.kind, exp.epsilon, exp.surrogate,
                                               exp.sigmoid_a, ds);
    solver::SolverConfig scfg = cfg.solver_cfg;
    scfg.seed = seed;
    const Eigen::VectorXd warm = fairness::fit_logistic(ds, 250);

    solver::SolveResult sol;
    switch (cfg.method) {
      case Method::saa: {
        auto program = fairness::make_fairness_program(ds, spec, Eigen::Vector2d::Zero());
        program.theta_init = warm;
        normalize_eta(scfg, program);
        sol = solver::proxy_dual_ascent(program, scfg);
        break;
      }
      case Method::two_dataset: {
        auto program = fairness::make_fairness_program(ds, spec, Eigen::Vector2d::Zero());
        program.theta_init = warm;
        normalize_eta(scfg, program);
        sol = solver::two_dataset_solve(program, cfg.split_fraction, scfg);
        break;
      }
      case Method::robust:
      case Method::proxy: {
        // Single-stage: both sides carry the jointly calibrated radius.
        auto program0 = fairness::make_fairness_program(ds, spec, Eigen::Vector2d::Zero());
        program0.theta_init = warm;
        normalize_eta(scfg, program0);
        auto stage1 = solver::proxy_dual_ascent(program0, scfg);
        auto radii = calibrated_radii(spec, ds, stage1.theta, {0, 1}, seed);
        auto program = fairness::make_fairness_program(ds, spec, radii);
        program.theta_init = stage1.theta;
        sol = solver::proxy_dual_ascent(program, scfg);
        break;
      }
      case Method::two_stage: {
        // Stage 1 (SAA) identifies the active sides; the radii are then
        // recalibrated on the identified set (pivotal rule for one side,
        // joint search when both bind).
        auto program0 = fairness::make_fairness_program(ds, spec, Eigen::Vector2d::Zero());
        program0.theta_init = warm;
        normalize_eta(scfg, program0);
        auto stage1 = solver::proxy_dual_ascent(program0, scfg);
        std::vector<int> active;
        for (int j = 0; j < 2; ++j) {
          if (stage1.lambda(j) > scfg.active_tol ||
              std::abs(stage1.robust_values(j)) <= scfg.active_tol)
            active.push_back(j);
        }
        if (active.empty()) {
          sol = stage1;
          break;
        }
        auto radii = calibrated_radii(spec, ds, stage1.theta, active, seed);
        auto program = fairness::make_fairness_program(ds, spec, radii);
        program.theta_init = stage1.theta;
        sol = solver::proxy_dual_ascent(program, scfg);
        sol.active_set = active;
        break;
      }
    }

    // The full dataset plays the population; the gap is exact counting.
    auto yhat = fairness::predict(sol.theta, full);
    double hit1 = 0, n1 = 0, hit0 = 0, n0 = 0;
    for (Eigen::Index i = 0; i < yhat.size(); ++i) {
      const bool cond = exp.kind == fairness::RateConstraintKind::demographic_parity
                            ? true
                            : (exp.kind == fairness::RateConstraintKind::fpr_parity
                                   ? full.labels(i) == 0
                                   : full.labels(i) == 1);
      if (!cond) continue;
      if (full.group(i) == 1) {
        n1 += 1;
        hit1 += yhat(i);
      } else {
        n0 += 1;
        hit0 += yhat(i);
      }
    }
    if (n1 == 0 || n0 == 0)
      throw std::domain_error("fairness run: empty population conditioning cell");
    const double signed_gap = hit1 / n1 - hit0 / n0;

    rep.theta = sol.theta;
    rep.lambda = sol.lambda;
    rep.pop_values.resize(2);
    rep.pop_values << signed_gap - exp.epsilon, -signed_gap - exp.epsilon;
    rep.pop_se = Eigen::VectorXd::Zero(2);
    rep.satisfied = {rep.pop_values(0) <= 0.0 ? 1 : 0, rep.pop_values(1) <= 0.0 ? 1 : 0};
    rep.marginal = {0, 0};
    rep.objective = fairness::logistic_objective_samples(sol.theta, ds).mean();
    rep.metrics["error_rate"] = fairness::error_rate(sol.theta, full);
    rep.metrics["population_gap"] = std::abs(signed_gap);
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
  }
};

}  // namespace

std::string method_name(Method m) {
  switch (m) {
    case Method::saa: return "saa";
    case Method::robust: return "robust";
    case Method::two_stage: return "two_stage";
    case Method::proxy: return "proxy";
    case Method::two_dataset: return "two_dataset";
  }
  return "unknown";
}

Method method_from_name(const std::string& name) {
  if (name == "saa") return Method::saa;
  if (name == "robust") return Method::robust;
  if (name == "two_stage") return Method::two_stage;
  if (name == "proxy") return Method::proxy;
  if (name == "two_dataset") return Method::two_dataset;
  throw std::invalid_argument("unknown method '" + name + "'");
}

std::uint64_t mix_seed(std::uint64_t master, std::uint64_t index) {
  // splitmix64 over master advanced by index + 1 streams.
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

solver::SolverConfig default_newsvendor_solver_config(Eigen::Index n) {
  const double nd = static_cast<double>(std::max<Eigen::Index>(n, 10));
  solver::SolverConfig cfg;
  cfg.eta0 = 0.5;
  cfg.adaptive_steps = true;  // the harness also normalizes eta0 by |G(theta0)|
  cfg.inner_tol = 1e-6;
  cfg.inner_max_iter = 150;
  cfg.dual_tol = 1e-3;
  cfg.dual_max_iter = 400;
  cfg.feasibility_tol = std::max(2e-3, 15.0 / nd);
  cfg.active_tol = 0.05;
  return cfg;
}

solver::SolverConfig default_fairness_solver_config(Eigen::Index n_train) {
  const double nd = static_cast<double>(std::max<Eigen::Index>(n_train, 100));
  solver::SolverConfig cfg;
  cfg.eta0 = 0.5;
  cfg.eta_decay = 0.5;
  cfg.inner_tol = 1e-4;
  cfg.inner_max_iter = 30;
  cfg.dual_tol = std::max(5e-4, 3.0 / nd);
  cfg.dual_max_iter = 400;
  cfg.feasibility_tol = std::max(1e-3, 6.0 / nd);
  cfg.active_tol = 5e-3;
  return cfg;
}

RunResult run_experiment(const ExperimentConfig& cfg) {
  if (cfg.replicates < 1) throw std::invalid_argument("run_experiment: replicates must be >= 1");

  RunResult out;
  out.label = cfg.label;
  out.reports.resize(static_cast<std::size_t>(cfg.replicates));

  Eigen::Index k = 0;
  if (std::holds_alternative<NewsvendorExperiment>(cfg.problem)) {
    const auto& exp = std::get<NewsvendorExperiment>(cfg.problem);
    if (cfg.n < 10) throw std::invalid_argument("run_experiment: n must be >= 10");
    newsvendor::validate_spec(exp.spec);
    k = static_cast<Eigen::Index>(exp.spec.groups.size());
    NewsvendorRunner runner{cfg, exp};
    run_parallel(cfg.replicates, cfg.parallel, [&](int r) {
      try {
        out.reports[static_cast<std::size_t>(r)] = runner.run_one(r);
      } catch (const std::exception& err) {
        ReplicateReport rep;
        rep.replicate = r;
        rep.failed = true;
        rep.failure = err.what();
        rep.satisfied.assign(static_cast<std::size_t>(k), 0);
        rep.marginal.assign(static_cast<std::size_t>(k), 0);
        rep.pop_values = Eigen::VectorXd::Zero(k);
        rep.pop_se = Eigen::VectorXd::Zero(k);
        out.reports[static_cast<std::size_t>(r)] = std::move(rep);
      }
    });
  } else {
    const auto& exp = std::get<FairnessExperiment>(cfg.problem);
    if (!(exp.nominal_level > 0.5 && exp.nominal_level < 1.0))
      throw std::invalid_argument("run_experiment: nominal level must lie in (0.5, 1)");
    fairness::LabeledDataset full =
        exp.synthetic
            ? fairness::synthesize_dataset(exp.synthetic_n, exp.population_seed,
                                           exp.synthetic_params)
            : fairness::load_dataset(exp.csv_path, fairness::load_schema(exp.schema_path));
    k = 2;
    FairnessRunner runner{cfg, exp, full};
    run_parallel(cfg.replicates, cfg.parallel, [&](int r) {
      try {
        out.reports[static_cast<std::size_t>(r)] = runner.run_one(r);
      } catch (const std::exception& err) {
        ReplicateReport rep;
        rep.replicate = r;
        rep.failed = true;
        rep.failure = err.what();
        rep.satisfied.assign(2, 0);
        rep.marginal.assign(2, 0);
        rep.pop_values = Eigen::VectorXd::Zero(2);
        rep.pop_se = Eigen::VectorXd::Zero(2);
        out.reports[static_cast<std::size_t>(r)] = std::move(rep);
      }
    });
  }

  out.table = aggregate(out.reports, k, cfg.include_failed_in_denominator);
  const double failure_fraction =
      static_cast<double>(out.table.failed) / static_cast<double>(cfg.replicates);
  if (failure_fraction > cfg.max_failure_fraction) {
    std::string first;
    for (const auto& rep : out.reports)
      if (rep.failed) {
        first = rep.failure;
        break;
      }
    throw std::runtime_error("run_experiment: " + std::to_string(out.table.failed) + "/" +
                             std::to_string(cfg.replicates) +
                             " replicates failed; first error: " + first);
  }
  return out;
}

TheoremCheckResult theorem_check(const ExperimentConfig& cfg, double population_sd) {
  if (!std::holds_alternative<NewsvendorExperiment>(cfg.problem))
    throw std::invalid_argument("theorem_check: newsvendor problems only");
  const auto& exp = std::get<NewsvendorExperiment>(cfg.problem);
  if (exp.spec.groups.size() != 1)
    throw std::invalid_argument("theorem_check: requires a single constraint");
  if (!(population_sd > 0.0))
    throw std::invalid_argument("theorem_check: population sd must be positive");

  TheoremCheckResult result;
  result.run = run_experiment(cfg);
  std::vector<double> vals;
  vals.reserve(result.run.reports.size());
  const double root_n = std::sqrt(static_cast<double>(cfg.n));
  for (const auto& rep : result.run.reports) {
    if (rep.failed) continue;
    vals.push_back(root_n * rep.pop_values(0) / population_sd);
  }
  result.standardized = Eigen::Map<Eigen::VectorXd>(vals.data(),
                                                    static_cast<Eigen::Index>(vals.size()));
  result.mean = result.standardized.mean();
  result.variance = (result.standardized.array() - result.mean).square().sum() /
                    static_cast<double>(result.standardized.size());
  return result;
}

void write_results_csv(const std::string& path, const std::vector<RunResult>& runs) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_results_csv: cannot open " + path);
  out << "replicate,constraint_id,pop_value,pop_se,satisfied,objective,seconds,marginal,"
         "failed,label\n";
  char buf[512];
  for (const auto& run : runs) {
    for (const auto& rep : run.reports) {
      const Eigen::Index k = rep.pop_values.size();
      for (Eigen::Index j = 0; j < k; ++j) {
        std::snprintf(buf, sizeof(buf), "%d,%lld,%.12g,%.12g,%d,%.12g,%.3f,%d,%d,%s\n",
                      rep.replicate, static_cast<long long>(j), rep.pop_values(j),
                      rep.pop_se(j), rep.satisfied[static_cast<std::size_t>(j)], rep.objective,
                      rep.seconds, rep.marginal[static_cast<std::size_t>(j)],
                      rep.failed ? 1 : 0, run.label.c_str());
        out << buf;
      }
    }
  }
}

void write_frequencies_csv(const std::string& path, const std::vector<RunResult>& runs) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_frequencies_csv: cannot open " + path);
  if (runs.empty()) return;
  const Eigen::Index k = runs.front().table.per_constraint.size();
  out << "label,counted,failed";
  for (Eigen::Index j = 0; j < k; ++j)
    out << ",freq_" << j << ",se_" << j << ",marginal_" << j;
  out << ",joint_freq,joint_se\n";
  char buf[256];
  for (const auto& run : runs) {
    out << run.label << "," << run.table.counted << "," << run.table.failed;
    for (Eigen::Index j = 0; j < k; ++j) {
      std::snprintf(buf, sizeof(buf), ",%.12g,%.12g,%d", run.table.per_constraint(j),
                    run.table.per_constraint_se(j), run.table.marginal_counts(j));
      out << buf;
    }
    std::snprintf(buf, sizeof(buf), ",%.12g,%.12g\n", run.table.joint, run.table.joint_se);
    out << buf;
  }
}

std::string results_json(const std::vector<RunResult>& runs) {
  json root = json::array();
  for (const auto& run : runs) {
    json jr;
    jr["label"] = run.label;
    jr["table"] = {
        {"counted", run.table.counted},
        {"failed", run.table.failed},
        {"per_constraint", std::vector<double>(run.table.per_constraint.begin(),
                                               run.table.per_constraint.end())},
        {"per_constraint_se", std::vector<double>(run.table.per_constraint_se.begin(),
                                                  run.table.per_constraint_se.end())},
        {"marginal_counts", std::vector<int>(run.table.marginal_counts.begin(),
                                             run.table.marginal_counts.end())},
        {"joint", run.table.joint},
        {"joint_se", run.table.joint_se},
    };
    json reps = json::array();
    for (const auto& rep : run.reports) {
      json jrep;
      jrep["replicate"] = rep.replicate;
      jrep["failed"] = rep.failed;
      if (rep.failed) {
        jrep["failure"] = rep.failure;
      } else {
        jrep["theta"] = std::vector<double>(rep.theta.begin(), rep.theta.end());
        jrep["lambda"] = std::vector<double>(rep.lambda.begin(), rep.lambda.end());
        jrep["pop_values"] = std::vector<double>(rep.pop_values.begin(), rep.pop_values.end());
        jrep["pop_se"] = std::vector<double>(rep.pop_se.begin(), rep.pop_se.end());
        jrep["satisfied"] = rep.satisfied;
        jrep["marginal"] = rep.marginal;
        jrep["objective"] = rep.objective;
        jrep["seconds"] = rep.seconds;
        if (!rep.metrics.empty()) jrep["metrics"] = rep.metrics;
      }
      reps.push_back(std::move(jrep));
    }
    jr["replicates"] = std::move(reps);
    root.push_back(std::move(jr));
  }
  return root.dump(2);
}

}  // namespace drocal::harness
