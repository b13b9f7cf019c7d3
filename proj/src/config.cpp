#include "drocal/config.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace drocal::config {

namespace {

using json = nlohmann::json;

/// Tracks which keys of one JSON object were consumed and complains about
/// leftovers, naming the full dotted path.
class Section {
 public:
  Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(path_, "expected an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return obj_.contains(key);
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return obj_.at(key);
  }

  template <typename T>
  T get(const std::string& key, const T& fallback) {
    seen_.insert(key);
    if (!obj_.contains(key)) return fallback;
    try {
      return obj_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(dotted(key), e.what());
    }
  }

  template <typename T>
  T require(const std::string& key) {
    seen_.insert(key);
    if (!obj_.contains(key)) throw ConfigError(dotted(key), "missing required key");
    try {
      return obj_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(dotted(key), e.what());
    }
  }

  std::string dotted(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(dotted(it.key()), "unknown key");
    }
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

Eigen::VectorXd vector_or_scalar(Section& sec, const std::string& key, int size,
                                 double fallback) {
  if (!sec.has(key)) return Eigen::VectorXd::Constant(size, fallback);
  const json& v = sec.raw(key);
  if (v.is_number()) return Eigen::VectorXd::Constant(size, v.get<double>());
  if (v.is_array()) {
    if (static_cast<int>(v.size()) != size)
      throw ConfigError(sec.dotted(key),
                        "expected " + std::to_string(size) + " entries, got " +
                            std::to_string(v.size()));
    Eigen::VectorXd out(size);
    for (int i = 0; i < size; ++i) out(i) = v.at(static_cast<std::size_t>(i)).get<double>();
    return out;
  }
  throw ConfigError(sec.dotted(key), "expected a number or an array");
}

newsvendor::NewsvendorSpec parse_newsvendor(const json& j, const std::string& path,
                                            harness::NewsvendorExperiment& exp) {
  Section sec(j, path);
  newsvendor::NewsvendorSpec spec;
  spec.dims = sec.get<int>("items", 1);
  if (spec.dims < 1) throw ConfigError(path + ".items", "must be >= 1");
  spec.cost = vector_or_scalar(sec, "cost", spec.dims, 1.0);
  spec.price = vector_or_scalar(sec, "price", spec.dims, 2.0);

  if (sec.has("groups")) {
    for (const auto& g : sec.raw("groups")) spec.groups.push_back(g.get<std::vector<int>>());
  } else if (spec.dims == 1) {
    spec.groups = {{0}};
  } else {
    std::vector<int> a, b;
    for (int i = 0; i < spec.dims / 2; ++i) a.push_back(i);
    for (int i = spec.dims / 2; i < spec.dims; ++i) b.push_back(i);
    spec.groups = {a, b};
  }
  spec.epsilon =
      vector_or_scalar(sec, "epsilon", static_cast<int>(spec.groups.size()), 1.0);

  if (sec.has("demand")) {
    Section dem(sec.raw("demand"), path + ".demand");
    const std::string kind = dem.get<std::string>("kind", "exponential");
    if (kind == "exponential") {
      spec.demand.kind = newsvendor::DemandModel::Kind::exponential;
      spec.demand.exp_mean = dem.get<double>("mean", 10.0);
    } else if (kind == "gaussian") {
      spec.demand.kind = newsvendor::DemandModel::Kind::gaussian;
      spec.demand.gauss_mean = vector_or_scalar(dem, "mean", spec.dims, 10.0);
      spec.demand.variance_scale = dem.get<double>("variance_scale", 9.0);
      spec.demand.exchangeable_r = dem.get<double>("correlation", 0.0);
    } else {
      throw ConfigError(path + ".demand.kind", "must be 'exponential' or 'gaussian'");
    }
    dem.finish();
  } else if (spec.dims > 1) {
    spec.demand.kind = newsvendor::DemandModel::Kind::gaussian;
    spec.demand.gauss_mean = Eigen::VectorXd::Constant(spec.dims, 10.0);
  }

  if (sec.has("theta_box")) {
    const json& box = sec.raw("theta_box");
    if (!box.is_array() || box.size() != 2)
      throw ConfigError(path + ".theta_box", "expected [lo, hi]");
    spec.theta_lo = box.at(0).get<double>();
    spec.theta_hi = box.at(1).get<double>();
  }
  if (sec.has("radii")) {
    exp.radii_override = vector_or_scalar(sec, "radii", static_cast<int>(spec.groups.size()), 0.0);
  }
  sec.finish();
  try {
    newsvendor::validate_spec(spec);
  } catch (const std::exception& e) {
    throw ConfigError(path, e.what());
  }
  return spec;
}

harness::FairnessExperiment parse_fairness(const json& j, const std::string& path) {
  Section sec(j, path);
  harness::FairnessExperiment exp;
  if (sec.has("source")) {
    Section src(sec.raw("source"), path + ".source");
    const std::string kind = src.get<std::string>("kind", "synthetic");
    if (kind == "synthetic") {
      exp.synthetic = true;
      exp.synthetic_n = src.get<Eigen::Index>("n", 12000);
      exp.population_seed = src.get<std::uint64_t>("seed", 4001);
      if (src.has("params")) {
        Section par(src.raw("params"), path + ".source.params");
        exp.synthetic_params.feature_dim = par.get<int>("feature_dim", 2);
        exp.synthetic_params.p_group1 = par.get<double>("p_group1", 0.5);
        exp.synthetic_params.base_rate_a0 = par.get<double>("base_rate_a0", 0.3);
        exp.synthetic_params.base_rate_a1 = par.get<double>("base_rate_a1", 0.5);
        exp.synthetic_params.noise_sd = par.get<double>("noise_sd", 1.0);
        if (par.has("class_shift"))
          exp.synthetic_params.class_shift =
              vector_or_scalar(par, "class_shift", exp.synthetic_params.feature_dim, 0.0);
        if (par.has("group_shift"))
          exp.synthetic_params.group_shift =
              vector_or_scalar(par, "group_shift", exp.synthetic_params.feature_dim, 0.0);
        par.finish();
      }
    } else if (kind == "csv") {
      exp.synthetic = false;
      exp.csv_path = src.require<std::string>("path");
      exp.schema_path = src.require<std::string>("schema");
    } else {
      throw ConfigError(path + ".source.kind", "must be 'synthetic' or 'csv'");
    }
    src.finish();
  }
  if (sec.has("constraint")) {
    Section con(sec.raw("constraint"), path + ".constraint");
    const std::string kind = con.get<std::string>("kind", "demographic_parity");
    if (kind == "demographic_parity")
      exp.kind = fairness::RateConstraintKind::demographic_parity;
    else if (kind == "equal_opportunity")
      exp.kind = fairness::RateConstraintKind::equal_opportunity;
    else if (kind == "fpr_parity")
      exp.kind = fairness::RateConstraintKind::fpr_parity;
    else if (kind == "tpr_parity")
      exp.kind = fairness::RateConstraintKind::tpr_parity;
    else
      throw ConfigError(path + ".constraint.kind", "unknown rate constraint kind");
    exp.epsilon = con.get<double>("epsilon", 0.03);
    if (con.has("surrogate")) {
      Section sur(con.raw("surrogate"), path + ".constraint.surrogate");
      const std::string skind = sur.get<std::string>("kind", "sigmoid");
      if (skind == "sigmoid")
        exp.surrogate = fairness::SurrogateKind::sigmoid;
      else if (skind == "hinge")
        exp.surrogate = fairness::SurrogateKind::hinge;
      else
        throw ConfigError(path + ".constraint.surrogate.kind", "must be 'sigmoid' or 'hinge'");
      exp.sigmoid_a = sur.get<double>("a", 2.0);
      sur.finish();
    }
    con.finish();
  }
  exp.bootstrap_rate = sec.get<double>("bootstrap_rate", 0.5);
  exp.nominal_level = sec.get<double>("nominal_level", 0.9);
  exp.per_side_calibration = sec.get<bool>("per_side_calibration", false);
  exp.calibration_draws = sec.get<std::int64_t>("calibration_draws", 200000);
  sec.finish();
  return exp;
}

CliConfig parse(const json& full) {
  const json& root_json = full.contains("config") ? full.at("config") : full;
  CliConfig out;
  Section root(root_json, "");

  // Problem block.
  if (!root.has("problem")) throw ConfigError("problem", "missing required key");
  Section prob(root.raw("problem"), "problem");
  const std::string type = prob.require<std::string>("type");
  if (type == "newsvendor") {
    harness::NewsvendorExperiment exp;
    if (prob.has("newsvendor"))
      exp.spec = parse_newsvendor(prob.raw("newsvendor"), "problem.newsvendor", exp);
    else
      exp.spec = newsvendor::single_item_spec();
    out.base.problem = exp;
  } else if (type == "fairness") {
    harness::FairnessExperiment exp;
    if (prob.has("fairness")) exp = parse_fairness(prob.raw("fairness"), "problem.fairness");
    out.base.problem = exp;
  } else {
    throw ConfigError("problem.type", "must be 'newsvendor' or 'fairness'");
  }
  prob.finish();

  try {
    out.base.method = harness::method_from_name(root.get<std::string>("method", "robust"));
  } catch (const std::exception& e) {
    throw ConfigError("method", e.what());
  }

  if (std::holds_alternative<harness::NewsvendorExperiment>(out.base.problem)) {
    auto& exp = std::get<harness::NewsvendorExperiment>(out.base.problem);
    exp.alpha = root.get<double>("alpha", 0.05);
    if (root.has("joint_level")) exp.joint_level = root.get<double>("joint_level", 0.9);
  } else {
    root.get<double>("alpha", 0.05);  // tolerated but unused for fairness
  }
  out.alphas = root.get<std::vector<double>>("alphas", {});
  out.levels = root.get<std::vector<double>>("levels", {});
  out.include_saa = root.get<bool>("include_saa", true);

  out.base.n = root.get<Eigen::Index>("n", 3000);
  out.base.replicates = root.get<int>("replicates", 100);
  out.base.master_seed = root.get<std::uint64_t>("master_seed", 12345);
  out.base.parallel = root.get<int>("parallel", 0);
  out.base.max_failure_fraction = root.get<double>("max_failure_fraction", 0.01);
  out.base.include_failed_in_denominator =
      root.get<bool>("include_failed_in_denominator", false);
  out.base.split_fraction = root.get<double>("split_fraction", 0.5);
  out.base.label = root.get<std::string>("label", "");

  if (std::holds_alternative<harness::NewsvendorExperiment>(out.base.problem)) {
    out.base.solver_cfg = harness::default_newsvendor_solver_config(out.base.n);
  } else {
    const auto& fexp = std::get<harness::FairnessExperiment>(out.base.problem);
    const auto n_train = static_cast<Eigen::Index>(
        fexp.bootstrap_rate * static_cast<double>(fexp.synthetic ? fexp.synthetic_n : 12000));
    out.base.solver_cfg = harness::default_fairness_solver_config(n_train);
  }

  if (root.has("oracle")) {
    Section ora(root.raw("oracle"), "oracle");
    out.base.oracle.draws = ora.get<std::int64_t>("draws", 1000000);
    out.base.oracle.seed_offset = ora.get<std::uint64_t>("seed_offset", 9001);
    ora.finish();
  }
  if (root.has("solver")) {
    Section sol(root.raw("solver"), "solver");
    auto& s = out.base.solver_cfg;
    s.eta0 = sol.get<double>("eta0", s.eta0);
    s.eta_decay = sol.get<double>("eta_decay", s.eta_decay);
    s.inner_tol = sol.get<double>("inner_tol", s.inner_tol);
    s.inner_max_iter = sol.get<int>("inner_max_iter", s.inner_max_iter);
    s.dual_tol = sol.get<double>("dual_tol", s.dual_tol);
    s.dual_max_iter = sol.get<int>("dual_max_iter", s.dual_max_iter);
    s.feasibility_tol = sol.get<double>("feasibility_tol", s.feasibility_tol);
    s.active_tol = sol.get<double>("active_tol", s.active_tol);
    sol.finish();
  }
  root.finish();

  if (out.base.replicates < 1) throw ConfigError("replicates", "must be >= 1");
  if (out.base.n < 10) throw ConfigError("n", "must be >= 10");
  for (double a : out.alphas)
    if (!(a > 0.0 && a < 0.5)) throw ConfigError("alphas", "entries must lie in (0, 0.5)");
  for (double l : out.levels)
    if (!(l > 0.5 && l < 1.0)) throw ConfigError("levels", "entries must lie in (0.5, 1)");

  // Canonical echo used for the manifest.
  json echo = root_json;
  out.normalized = echo.dump(2);
  return out;
}

}  // namespace

CliConfig validate_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return validate_config_text(ss.str(), overrides);
}

CliConfig validate_config_text(const std::string& text,
                               const std::vector<std::string>& overrides) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError("config", std::string("invalid JSON: ") + e.what());
  }
  json& root = j.contains("config") ? j.at("config") : j;
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set", "expected key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    const std::string val = kv.substr(eq + 1);
    json parsed;
    try {
      parsed = json::parse(val);
    } catch (const json::exception&) {
      parsed = val;  // plain string value
    }
    json* node = &root;
    std::stringstream ks(key);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ks, part, '.')) parts.push_back(part);
    if (parts.empty()) throw ConfigError("--set", "empty key in '" + kv + "'");
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
      if (!node->contains(parts[i])) (*node)[parts[i]] = json::object();
      node = &(*node)[parts[i]];
    }
    (*node)[parts.back()] = parsed;
  }
  return parse(j);
}

}  // namespace drocal::config
