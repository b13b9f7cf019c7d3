#include "drocal/calibration.hpp"
#include "drocal/config.hpp"
#include "drocal/harness.hpp"
#include "drocal/newsvendor.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

using drocal::config::CliConfig;
using json = nlohmann::json;

struct RunOptions {
  std::string config_path;
  std::string out_dir = ".";
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<int> parallel;
  std::string log_level = "info";
};

void add_run_options(CLI::App* cmd, RunOptions& opts) {
  cmd->add_option("--config", opts.config_path, "JSON config (or a manifest.json)")
      ->required();
  cmd->add_option("--out", opts.out_dir, "output directory");
  cmd->add_option("--set", opts.overrides, "override a config key, dotted.key=value");
  cmd->add_option("--seed", opts.seed, "override master_seed");
  cmd->add_option("--parallel", opts.parallel, "worker threads (0 = hardware)");
  cmd->add_option("--log-level", opts.log_level, "quiet | info")
      ->check(CLI::IsMember({"quiet", "info"}));
}

CliConfig load(const RunOptions& opts) {
  CliConfig cfg = drocal::config::validate_config(opts.config_path, opts.overrides);
  if (opts.seed) cfg.base.master_seed = *opts.seed;
  if (opts.parallel) cfg.base.parallel = *opts.parallel;
  return cfg;
}

void info(const RunOptions& opts, const std::string& msg) {
  if (opts.log_level != "quiet") std::cerr << "[drocal] " << msg << "\n";
}

void write_outputs(const RunOptions& opts, const CliConfig& cfg, const std::string& command,
                   const std::vector<drocal::harness::RunResult>& runs) {
  namespace fs = std::filesystem;
  fs::create_directories(opts.out_dir);
  const std::string results_csv = (fs::path(opts.out_dir) / "results.csv").string();
  const std::string freq_csv = (fs::path(opts.out_dir) / "frequencies.csv").string();
  const std::string results_js = (fs::path(opts.out_dir) / "results.json").string();
  const std::string manifest = (fs::path(opts.out_dir) / "manifest.json").string();
  drocal::harness::write_results_csv(results_csv, runs);
  drocal::harness::write_frequencies_csv(freq_csv, runs);
  std::ofstream(results_js) << drocal::harness::results_json(runs);
  json man;
  man["tool"] = "drocal";
  man["version"] = "0.1.0";
  man["command"] = command;
  man["config"] = json::parse(cfg.normalized);
  man["master_seed"] = cfg.base.master_seed;
  man["seed_rule"] = "splitmix64(master_seed + 0x9E3779B97F4A7C15 * (replicate + 1))";
  man["outputs"] = {"results.csv", "frequencies.csv", "results.json"};
  std::ofstream(manifest) << man.dump(2) << "\n";
  info(opts, "wrote " + results_csv + ", " + freq_csv + ", " + results_js);
}

int run_simulate_newsvendor(const RunOptions& opts) {
  CliConfig cfg = load(opts);
  if (!std::holds_alternative<drocal::harness::NewsvendorExperiment>(cfg.base.problem))
    throw drocal::config::ConfigError("problem.type", "simulate-newsvendor needs a newsvendor problem");
  std::vector<drocal::harness::RunResult> runs;
  const bool sweeps = cfg.base.method == drocal::harness::Method::robust ||
                      cfg.base.method == drocal::harness::Method::two_stage ||
                      cfg.base.method == drocal::harness::Method::proxy;
  std::vector<double> alphas = cfg.alphas;
  if (!sweeps)
    alphas = {};  // saa / two_dataset ignore the radius sweep
  else if (alphas.empty())
    alphas = {std::get<drocal::harness::NewsvendorExperiment>(cfg.base.problem).alpha};

  if (alphas.empty()) {
    auto run_cfg = cfg.base;
    run_cfg.label = drocal::harness::method_name(cfg.base.method);
    info(opts, "running " + run_cfg.label);
    runs.push_back(drocal::harness::run_experiment(run_cfg));
  } else {
    for (double a : alphas) {
      auto run_cfg = cfg.base;
      std::get<drocal::harness::NewsvendorExperiment>(run_cfg.problem).alpha = a;
      char label[64];
      std::snprintf(label, sizeof(label), "alpha=%g", a);
      run_cfg.label = label;
      info(opts, std::string("running ") + label);
      runs.push_back(drocal::harness::run_experiment(run_cfg));
    }
  }
  write_outputs(opts, cfg, "simulate-newsvendor", runs);
  for (const auto& r : runs)
    std::printf("%-14s joint=%.4f (se %.4f)\n", r.label.c_str(), r.table.joint,
                r.table.joint_se);
  return 0;
}

int run_fairness(const RunOptions& opts) {
  CliConfig cfg = load(opts);
  if (!std::holds_alternative<drocal::harness::FairnessExperiment>(cfg.base.problem))
    throw drocal::config::ConfigError("problem.type", "fairness-run needs a fairness problem");
  std::vector<drocal::harness::RunResult> runs;
  if (cfg.include_saa) {
    auto run_cfg = cfg.base;
    run_cfg.method = drocal::harness::Method::saa;
    run_cfg.label = "saa";
    info(opts, "running saa baseline");
    runs.push_back(drocal::harness::run_experiment(run_cfg));
  }
  std::vector<double> levels = cfg.levels;
  if (levels.empty())
    levels = {std::get<drocal::harness::FairnessExperiment>(cfg.base.problem).nominal_level};
  const auto method = cfg.base.method == drocal::harness::Method::saa
                          ? drocal::harness::Method::two_stage
                          : cfg.base.method;
  for (double level : levels) {
    auto run_cfg = cfg.base;
    run_cfg.method = method;
    std::get<drocal::harness::FairnessExperiment>(run_cfg.problem).nominal_level = level;
    char label[64];
    std::snprintf(label, sizeof(label), "level=%g", level);
    run_cfg.label = label;
    info(opts, std::string("running ") + label);
    runs.push_back(drocal::harness::run_experiment(run_cfg));
  }
  write_outputs(opts, cfg, "fairness-run", runs);
  for (const auto& r : runs)
    std::printf("%-12s joint=%.4f (se %.4f)\n", r.label.c_str(), r.table.joint,
                r.table.joint_se);
  return 0;
}

int run_theorem_check(const RunOptions& opts) {
  CliConfig cfg = load(opts);
  if (!std::holds_alternative<drocal::harness::NewsvendorExperiment>(cfg.base.problem))
    throw drocal::config::ConfigError("problem.type", "theorem-check needs a newsvendor problem");
  const auto& exp = std::get<drocal::harness::NewsvendorExperiment>(cfg.base.problem);
  const double theta_star = drocal::newsvendor::single_item_population_optimum(exp.spec);
  const double sigma = drocal::newsvendor::single_item_constraint_sd(exp.spec, theta_star);
  auto run_cfg = cfg.base;
  run_cfg.label = "theorem_check";
  info(opts, "running theorem check");
  auto result = drocal::harness::theorem_check(run_cfg, sigma);
  write_outputs(opts, cfg, "theorem-check", {result.run});

  namespace fs = std::filesystem;
  std::ofstream sample((fs::path(opts.out_dir) / "standardized.csv").string());
  sample << "standardized\n";
  char buf[64];
  for (Eigen::Index i = 0; i < result.standardized.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.12g\n", result.standardized(i));
    sample << buf;
  }
  std::printf("standardized mean=%.4f variance=%.4f (replicates=%lld)\n", result.mean,
              result.variance, static_cast<long long>(result.standardized.size()));
  return 0;
}

int run_solve(const RunOptions& opts) {
  CliConfig cfg = load(opts);
  auto run_cfg = cfg.base;
  run_cfg.replicates = 1;
  run_cfg.label = "solve";
  auto run = drocal::harness::run_experiment(run_cfg);
  const auto& rep = run.reports.front();
  json sol;
  sol["theta"] = std::vector<double>(rep.theta.begin(), rep.theta.end());
  sol["lambda"] = std::vector<double>(rep.lambda.begin(), rep.lambda.end());
  sol["pop_values"] = std::vector<double>(rep.pop_values.begin(), rep.pop_values.end());
  sol["objective"] = rep.objective;
  namespace fs = std::filesystem;
  fs::create_directories(opts.out_dir);
  std::ofstream((fs::path(opts.out_dir) / "solution.json").string()) << sol.dump(2) << "\n";
  write_outputs(opts, cfg, "solve", {run});
  std::printf("theta = [");
  for (Eigen::Index i = 0; i < rep.theta.size(); ++i)
    std::printf("%s%.6f", i ? ", " : "", rep.theta(i));
  std::printf("]\nlambda = [");
  for (Eigen::Index i = 0; i < rep.lambda.size(); ++i)
    std::printf("%s%.6f", i ? ", " : "", rep.lambda(i));
  std::printf("]\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"chi-square DRO constraint calibration toolkit"};
  app.require_subcommand(1);

  RunOptions sim_opts, fair_opts, thm_opts, solve_opts;
  auto* sim = app.add_subcommand("simulate-newsvendor",
                                 "replicated newsvendor constraint-satisfaction experiment");
  add_run_options(sim, sim_opts);
  auto* fair = app.add_subcommand("fairness-run",
                                  "bootstrap fairness experiment on synthetic or CSV data");
  add_run_options(fair, fair_opts);
  auto* thm = app.add_subcommand("theorem-check",
                                 "standardized limit-law check for a single constraint");
  add_run_options(thm, thm_opts);
  auto* solve = app.add_subcommand("solve", "one solve of the configured problem");
  add_run_options(solve, solve_opts);

  double cal_alpha = 0.0, cal_joint = 0.0, cal_corr = 0.0;
  int cal_k = 1;
  std::int64_t cal_draws = 400000;
  std::uint64_t cal_seed = 2024;
  auto* cal = app.add_subcommand("calibrate", "print the calibrated radius");
  auto* alpha_opt = cal->add_option("--alpha", cal_alpha, "per-constraint level in (0, 0.5)");
  auto* joint_opt = cal->add_option("--joint-level", cal_joint, "joint level in (0.5, 1)");
  cal->add_option("--k", cal_k, "number of constraints (joint mode)");
  cal->add_option("--correlation", cal_corr, "exchangeable off-diagonal correlation");
  cal->add_option("--draws", cal_draws, "Monte Carlo draws for the joint search");
  cal->add_option("--calibration-seed", cal_seed, "Monte Carlo seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (sim->parsed()) return run_simulate_newsvendor(sim_opts);
    if (fair->parsed()) return run_fairness(fair_opts);
    if (thm->parsed()) return run_theorem_check(thm_opts);
    if (solve->parsed()) return run_solve(solve_opts);
    if (cal->parsed()) {
      if (alpha_opt->count() > 0) {
        const double rho = drocal::calibration::radius_for_level({cal_alpha, false});
        std::printf("rho = %.6f (sqrt rho = %.6f)\n", rho, std::sqrt(rho));
        return 0;
      }
      if (joint_opt->count() > 0) {
        Eigen::MatrixXd r = (1.0 - cal_corr) * Eigen::MatrixXd::Identity(cal_k, cal_k) +
                            cal_corr * Eigen::MatrixXd::Ones(cal_k, cal_k);
        auto rv = drocal::calibration::joint_radius_search({r, 0}, cal_joint, cal_draws,
                                                           cal_seed);
        std::printf("rho = %.6f per constraint (sqrt rho = %.6f)\n", rv.rho(0),
                    std::sqrt(rv.rho(0)));
        return 0;
      }
      std::cerr << "calibrate: pass --alpha or --joint-level\n";
      return 1;
    }
  } catch (const drocal::config::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const drocal::solver::SolverError& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    return 2;
  } catch (const std::runtime_error& e) {
    const std::string what = e.what();
    std::cerr << what << "\n";
    return what.rfind("run_experiment:", 0) == 0 ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
  return 0;
}
