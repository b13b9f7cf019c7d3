#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "drocal/harness.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>

using namespace drocal;
using harness::ExperimentConfig;
using harness::Method;

namespace {

ExperimentConfig small_newsvendor(Method method, int replicates, Eigen::Index n) {
  ExperimentConfig cfg;
  harness::NewsvendorExperiment exp;
  exp.spec = newsvendor::single_item_spec();
  exp.alpha = 0.05;
  cfg.problem = exp;
  cfg.method = method;
  cfg.n = n;
  cfg.replicates = replicates;
  cfg.master_seed = 777;
  cfg.solver_cfg = harness::default_newsvendor_solver_config(n);
  return cfg;
}

}  // namespace

TEST_CASE("mix_seed: frozen values and distinctness") {
  // Frozen so a refactor cannot silently change every experiment.
  CHECK(harness::mix_seed(0, 0) == 16294208416658607535ULL);
  CHECK(harness::mix_seed(12345, 3) != harness::mix_seed(12345, 4));
  CHECK(harness::mix_seed(12345, 3) != harness::mix_seed(12346, 3));
}

TEST_CASE("run_experiment: a single replicate's table equals its flags") {
  auto cfg = small_newsvendor(Method::saa, 1, 300);
  auto run = harness::run_experiment(cfg);
  REQUIRE(run.reports.size() == 1);
  REQUIRE(!run.reports[0].failed);
  CHECK(run.table.counted == 1);
  const double f = run.reports[0].satisfied[0] ? 1.0 : 0.0;
  CHECK(run.table.per_constraint(0) == f);
  CHECK(run.table.joint == f);
  CHECK(run.table.joint_se == 0.0);
}

TEST_CASE("run_experiment: reproducible tables and pop values") {
  auto cfg = small_newsvendor(Method::robust, 8, 400);
  auto a = harness::run_experiment(cfg);
  auto b = harness::run_experiment(cfg);
  CHECK(a.table.per_constraint == b.table.per_constraint);
  CHECK(a.table.joint == b.table.joint);
  for (std::size_t i = 0; i < a.reports.size(); ++i) {
    CHECK(a.reports[i].pop_values == b.reports[i].pop_values);
    CHECK(a.reports[i].theta == b.reports[i].theta);
  }
}

TEST_CASE("run_experiment: joint frequency never exceeds a per-constraint one") {
  ExperimentConfig cfg;
  harness::NewsvendorExperiment exp;
  exp.spec = newsvendor::multi_item_spec(4, 0.0, Eigen::VectorXd::Constant(2, 1.0));
  exp.alpha = 0.25;
  cfg.problem = exp;
  cfg.method = Method::robust;
  cfg.n = 250;
  cfg.replicates = 12;
  cfg.master_seed = 31;
  cfg.oracle.draws = 1000000;
  cfg.solver_cfg = harness::default_newsvendor_solver_config(cfg.n);
  auto run = harness::run_experiment(cfg);
  CHECK(run.table.joint <= run.table.per_constraint.minCoeff() + 1e-12);
  CHECK(run.table.failed == 0);
}

TEST_CASE("run_experiment: failed replicates fail the run beyond the threshold") {
  auto cfg = small_newsvendor(Method::robust, 4, 300);
  cfg.solver_cfg.dual_max_iter = 1;  // guaranteed non-convergence
  cfg.solver_cfg.dual_tol = 1e-14;
  CHECK_THROWS_AS(harness::run_experiment(cfg), std::runtime_error);

  cfg.max_failure_fraction = 1.0;  // tolerate them; reports keep the diagnostics
  auto run = harness::run_experiment(cfg);
  CHECK(run.table.failed == 4);
  CHECK(run.table.counted == 0);
  CHECK(!run.reports[0].failure.empty());

  cfg.include_failed_in_denominator = true;
  auto counted = harness::run_experiment(cfg);
  CHECK(counted.table.counted == 4);
  CHECK(counted.table.joint == 0.0);
}

TEST_CASE("run_experiment: fairness smoke run with both baselines") {
  ExperimentConfig cfg;
  harness::FairnessExperiment exp;
  exp.synthetic = true;
  exp.synthetic_n = 1200;
  exp.population_seed = 5;
  exp.epsilon = 0.05;
  exp.nominal_level = 0.9;
  cfg.problem = exp;
  cfg.n = 600;
  cfg.replicates = 3;
  cfg.master_seed = 99;
  cfg.solver_cfg = harness::default_fairness_solver_config(600);
  for (Method m : {Method::saa, Method::two_stage, Method::two_dataset}) {
    cfg.method = m;
    auto run = harness::run_experiment(cfg);
    CHECK(run.table.failed == 0);
    for (const auto& rep : run.reports) {
      CHECK(rep.metrics.count("error_rate") == 1);
      CHECK(rep.metrics.at("error_rate") >= 0.0);
      CHECK(rep.metrics.at("error_rate") <= 1.0);
      // flags consistent with the reported population values
      for (int j = 0; j < 2; ++j)
        CHECK(rep.satisfied[static_cast<std::size_t>(j)] == (rep.pop_values(j) <= 0.0 ? 1 : 0));
    }
  }
}

TEST_CASE("theorem_check: standardization wiring on a small run") {
  auto cfg = small_newsvendor(Method::robust, 6, 400);
  const auto& exp = std::get<harness::NewsvendorExperiment>(cfg.problem);
  const double theta_star = newsvendor::single_item_population_optimum(exp.spec);
  const double sigma = newsvendor::single_item_constraint_sd(exp.spec, theta_star);
  auto res = harness::theorem_check(cfg, sigma);
  REQUIRE(res.standardized.size() == 6);
  for (Eigen::Index i = 0; i < 6; ++i) {
    const double expect =
        std::sqrt(400.0) * res.run.reports[static_cast<std::size_t>(i)].pop_values(0) / sigma;
    CHECK(res.standardized(i) == doctest::Approx(expect));
  }
  CHECK(std::isfinite(res.mean));
  CHECK(res.variance >= 0.0);
  CHECK_THROWS_AS(harness::theorem_check(cfg, 0.0), std::invalid_argument);
}

TEST_CASE("csv and json emitters produce the documented layout") {
  auto cfg = small_newsvendor(Method::saa, 2, 300);
  cfg.label = "saa";
  auto run = harness::run_experiment(cfg);
  const std::string results = std::string(std::getenv("TMPDIR") ? std::getenv("TMPDIR") : "/tmp") +
                              "/drocal_results_test.csv";
  harness::write_results_csv(results, {run});
  std::ifstream in(results);
  std::string header;
  std::getline(in, header);
  CHECK(header ==
        "replicate,constraint_id,pop_value,pop_se,satisfied,objective,seconds,marginal,failed,"
        "label");
  int lines = 0;
  std::string line;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 2);

  const std::string js = harness::results_json({run});
  CHECK(js.find("\"label\": \"saa\"") != std::string::npos);
  CHECK(js.find("\"joint\"") != std::string::npos);
}
