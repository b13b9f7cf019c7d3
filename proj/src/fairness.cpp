#include "drocal/fairness.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

namespace drocal::fairness {

namespace {

using json = nlohmann::json;

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
  return cells;
}

double stable_sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double softplus(double t) {
  if (t > 30.0) return t;
  if (t < -30.0) return std::exp(t);
  return std::log1p(std::exp(t));
}

/// Whether sample i belongs to the conditioning event of the rate (DP has no
/// condition, EO and TPR condition on Y = 1, FPR on Y = 0).
bool in_condition(RateConstraintKind kind, int label) {
  switch (kind) {
    case RateConstraintKind::demographic_parity:
      return true;
    case RateConstraintKind::equal_opportunity:
    case RateConstraintKind::tpr_parity:
      return label == 1;
    case RateConstraintKind::fpr_parity:
      return label == 0;
  }
  return true;
}

/// Signed plug-in coefficient of sample i: the per-sample constraint is
/// coef_i * 1{theta^T x_i >= 0} - eps on the "A=1 minus A=0" side.
Eigen::VectorXd plug_in_coefficients(const RateConstraintSpec& spec, const LabeledDataset& ds) {
  const Eigen::Index n = ds.features.rows();
  Eigen::VectorXd coef = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!in_condition(spec.kind, ds.labels(i))) continue;
    coef(i) = ds.group(i) == 1 ? 1.0 / spec.plug_in_rate_a1 : -1.0 / spec.plug_in_rate_a0;
  }
  return coef;
}

}  // namespace

void validate_dataset(const LabeledDataset& ds) {
  const Eigen::Index n = ds.features.rows();
  if (n < 1) throw std::invalid_argument("dataset: empty");
  if (ds.labels.size() != n || ds.group.size() != n)
    throw std::invalid_argument("dataset: label/group length mismatch");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (ds.labels(i) != 0 && ds.labels(i) != 1)
      throw std::invalid_argument("dataset: labels must be 0/1");
    if (ds.group(i) != 0 && ds.group(i) != 1)
      throw std::invalid_argument("dataset: group must be 0/1");
  }
  if (ds.labels.minCoeff() == ds.labels.maxCoeff())
    throw std::invalid_argument("dataset: a label class is empty");
  if (ds.group.minCoeff() == ds.group.maxCoeff())
    throw std::invalid_argument("dataset: a group is empty");
}

DatasetSchema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("schema: cannot open " + path);
  json j = json::parse(in);
  DatasetSchema s;
  s.label_column = j.at("label").get<std::string>();
  s.positive_label = j.at("positive_label").get<std::string>();
  s.group_column = j.at("group").get<std::string>();
  s.advantaged_group = j.at("advantaged_group").get<std::string>();
  for (const auto& c : j.value("numeric", json::array())) s.numeric_columns.push_back(c);
  for (const auto& c : j.value("categorical", json::array()))
    s.categorical_columns.push_back(c);
  for (const auto& c : j.value("columns", json::array())) s.columns.push_back(c);
  return s;
}

LabeledDataset load_dataset(const std::string& csv_path, const DatasetSchema& schema) {
  std::ifstream in(csv_path);
  if (!in) throw std::runtime_error("load_dataset: cannot open " + csv_path);
  std::string line;
  std::vector<std::string> header = schema.columns;
  if (header.empty()) {
    if (!std::getline(in, line)) throw std::runtime_error("load_dataset: empty file");
    header = split_csv_line(line);
  }
  std::map<std::string, std::size_t> col_index;
  for (std::size_t c = 0; c < header.size(); ++c) col_index[header[c]] = c;
  auto require = [&](const std::string& name) {
    auto it = col_index.find(name);
    if (it == col_index.end())
      throw std::runtime_error("load_dataset: missing column '" + name + "'");
    return it->second;
  };
  const std::size_t label_at = require(schema.label_column);
  const std::size_t group_at = require(schema.group_column);
  std::vector<std::size_t> num_at, cat_at;
  for (const auto& c : schema.numeric_columns) num_at.push_back(require(c));
  for (const auto& c : schema.categorical_columns) cat_at.push_back(require(c));

  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw std::runtime_error("load_dataset: row " + std::to_string(rows.size() + 1) +
                               " has " + std::to_string(cells.size()) + " cells, expected " +
                               std::to_string(header.size()));
    rows.push_back(std::move(cells));
  }
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  if (n < 1) throw std::runtime_error("load_dataset: no data rows");

  // Categorical levels, sorted for a deterministic layout.
  std::vector<std::vector<std::string>> levels(cat_at.size());
  for (std::size_t c = 0; c < cat_at.size(); ++c) {
    std::set<std::string> uniq;
    for (const auto& r : rows) uniq.insert(r[cat_at[c]]);
    levels[c].assign(uniq.begin(), uniq.end());
  }

  Eigen::Index width = static_cast<Eigen::Index>(num_at.size());
  for (const auto& lv : levels) width += static_cast<Eigen::Index>(lv.size());
  width += 1;  // intercept

  LabeledDataset ds;
  ds.features = Eigen::MatrixXd::Zero(n, width);
  ds.labels.resize(n);
  ds.group.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    ds.labels(i) = r[label_at] == schema.positive_label ? 1 : 0;
    ds.group(i) = r[group_at] == schema.advantaged_group ? 1 : 0;
    Eigen::Index col = 0;
    for (std::size_t c = 0; c < num_at.size(); ++c, ++col) {
      try {
        ds.features(i, col) = std::stod(r[num_at[c]]);
      } catch (const std::exception&) {
        throw std::runtime_error("load_dataset: non-numeric cell in column '" +
                                 schema.numeric_columns[c] + "'");
      }
    }
    for (std::size_t c = 0; c < cat_at.size(); ++c) {
      const auto& lv = levels[c];
      const auto pos = std::lower_bound(lv.begin(), lv.end(), r[cat_at[c]]) - lv.begin();
      ds.features(i, col + pos) = 1.0;
      col += static_cast<Eigen::Index>(lv.size());
    }
    ds.features(i, width - 1) = 1.0;
  }

  for (std::size_t c = 0; c < num_at.size(); ++c) {
    auto col = ds.features.col(static_cast<Eigen::Index>(c));
    const double mean = col.mean();
    const double sd = std::sqrt((col.array() - mean).square().sum() / static_cast<double>(n));
    if (sd < 1e-12)
      col.setZero();  // constant column convention
    else
      col = (col.array() - mean) / sd;
  }

  ds.feature_names = schema.numeric_columns;
  for (std::size_t c = 0; c < cat_at.size(); ++c)
    for (const auto& lv : levels[c])
      ds.feature_names.push_back(schema.categorical_columns[c] + "=" + lv);
  ds.feature_names.push_back("intercept");
  validate_dataset(ds);
  return ds;
}

LabeledDataset synthesize_dataset(Eigen::Index n, std::uint64_t seed,
                                  const SyntheticParams& params) {
  if (n < 100) throw std::invalid_argument("synthesize_dataset: n must be >= 100");
  const int d = params.feature_dim;
  if (d < 1) throw std::invalid_argument("synthesize_dataset: feature_dim must be >= 1");
  Eigen::VectorXd cls = params.class_shift;
  if (cls.size() == 0) {
    cls = Eigen::VectorXd::Ones(d);
    if (d >= 1) cls(0) = 1.6;
    if (d >= 2) cls(1) = 1.6;
  }
  Eigen::VectorXd grp = params.group_shift;
  if (grp.size() == 0) {
    grp = Eigen::VectorXd::Zero(d);
    grp(0) = 1.2;
  }
  if (cls.size() != d || grp.size() != d)
    throw std::invalid_argument("synthesize_dataset: shift length mismatch");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  LabeledDataset ds;
  ds.features = Eigen::MatrixXd::Ones(n, d + 1);
  ds.labels.resize(n);
  ds.group.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int a = uni(rng) < params.p_group1 ? 1 : 0;
    const double rate = a == 1 ? params.base_rate_a1 : params.base_rate_a0;
    const int y = uni(rng) < rate ? 1 : 0;
    ds.group(i) = a;
    ds.labels(i) = y;
    for (int j = 0; j < d; ++j) {
      ds.features(i, j) = (y - 0.5) * cls(j) + (a - 0.5) * grp(j) + params.noise_sd * gauss(rng);
    }
  }
  for (int j = 0; j < d; ++j) ds.feature_names.push_back("x" + std::to_string(j));
  ds.feature_names.push_back("intercept");
  validate_dataset(ds);
  return ds;
}

RateConstraintSpec make_rate_constraint(RateConstraintKind kind, double epsilon,
                                        SurrogateKind surrogate, double sigmoid_a,
                                        const LabeledDataset& ds) {
  validate_dataset(ds);
  if (!(epsilon > 0.0)) throw std::invalid_argument("rate constraint: epsilon must be > 0");
  RateConstraintSpec spec;
  spec.kind = kind;
  spec.epsilon = epsilon;
  spec.surrogate = surrogate;
  spec.sigmoid_a = sigmoid_a;
  const Eigen::Index n = ds.features.rows();
  double n1 = 0.0, n0 = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!in_condition(kind, ds.labels(i))) continue;
    (ds.group(i) == 1 ? n1 : n0) += 1.0;
  }
  spec.plug_in_rate_a1 = n1 / static_cast<double>(n);
  spec.plug_in_rate_a0 = n0 / static_cast<double>(n);
  if (spec.plug_in_rate_a1 <= 0.0 || spec.plug_in_rate_a0 <= 0.0)
    throw std::domain_error("rate constraint: empty plug-in denominator cell");
  return spec;
}

namespace {

Eigen::ArrayXd sigmoid_array(const Eigen::ArrayXd& z) {
  // exp of the negative magnitude never overflows
  Eigen::ArrayXd e = (-z.abs()).exp();
  return (z >= 0.0).select(1.0 / (1.0 + e), e / (1.0 + e));
}

Eigen::ArrayXd softplus_array(const Eigen::ArrayXd& z) {
  return z.max(0.0) + (1.0 + (-z.abs()).exp()).log();
}

}  // namespace

Eigen::VectorXd logistic_objective_samples(const Eigen::VectorXd& theta,
                                           const LabeledDataset& ds) {
  Eigen::ArrayXd z = (ds.features * theta).array();
  return (softplus_array(z) - ds.labels.cast<double>().array() * z).matrix();
}

Eigen::VectorXd logistic_gradient(const Eigen::VectorXd& theta, const LabeledDataset& ds) {
  Eigen::ArrayXd z = (ds.features * theta).array();
  Eigen::VectorXd resid = (sigmoid_array(z) - ds.labels.cast<double>().array()).matrix();
  return ds.features.transpose() * resid / static_cast<double>(z.size());
}

Eigen::MatrixXd logistic_jacobian_samples(const Eigen::VectorXd& theta,
                                          const LabeledDataset& ds) {
  Eigen::ArrayXd z = (ds.features * theta).array();
  Eigen::VectorXd resid = (sigmoid_array(z) - ds.labels.cast<double>().array()).matrix();
  return resid.asDiagonal() * ds.features;
}

Eigen::VectorXd fit_logistic(const LabeledDataset& ds, int iterations) {
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(ds.features.cols());
  double step = 1.0;
  double value = logistic_objective_samples(theta, ds).mean();
  for (int it = 0; it < iterations; ++it) {
    Eigen::VectorXd grad = logistic_gradient(theta, ds);
    if (grad.norm() <= 1e-7) break;
    bool accepted = false;
    for (int bt = 0; bt < 30; ++bt) {
      Eigen::VectorXd trial = theta - step * grad;
      const double tv = logistic_objective_samples(trial, ds).mean();
      if (tv <= value - 1e-4 * step * grad.squaredNorm()) {
        theta = std::move(trial);
        value = tv;
        if (bt == 0) step *= 2.0;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
  }
  return theta;
}

Eigen::VectorXi predict(const Eigen::VectorXd& theta, const LabeledDataset& ds) {
  Eigen::VectorXd z = ds.features * theta;
  Eigen::VectorXi out(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) out(i) = z(i) >= 0.0 ? 1 : 0;
  return out;
}

double error_rate(const Eigen::VectorXd& theta, const LabeledDataset& ds) {
  Eigen::VectorXi yhat = predict(theta, ds);
  double wrong = 0.0;
  for (Eigen::Index i = 0; i < yhat.size(); ++i)
    if (yhat(i) != ds.labels(i)) wrong += 1.0;
  return wrong / static_cast<double>(yhat.size());
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> rate_constraint_samples(
    const RateConstraintSpec& spec, const Eigen::VectorXd& theta, const LabeledDataset& ds) {
  Eigen::VectorXd coef = plug_in_coefficients(spec, ds);
  Eigen::VectorXd z = ds.features * theta;
  Eigen::VectorXd pos(z.size()), neg(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double h = (z(i) >= 0.0 ? 1.0 : 0.0) * coef(i);
    pos(i) = h - spec.epsilon;
    neg(i) = -h - spec.epsilon;
  }
  return {pos, neg};
}

double surrogate_value(SurrogateKind kind, double a, double t) {
  if (kind == SurrogateKind::sigmoid) return 1.0 / (1.0 + std::exp(-a * t));
  return std::max(0.0, t + 1.0);
}

namespace {

// The surrogate transfer function is applied to the normalized margin
// t = theta^T x / ||theta_features|| (the intercept is the last column and is
// excluded from the norm). The indicator 1{theta^T x >= 0} is invariant to
// the scale of theta, so the surrogate must be too; on raw logits the inner
// minimization can silently shrink ||theta|| to flatten the soft rates
// without moving the actual classifier.
struct NormalizedMargin {
  Eigen::VectorXd t;        // per-sample normalized margin
  Eigen::MatrixXd jac;      // d t_i / d theta
};

NormalizedMargin normalized_margin(const Eigen::MatrixXd& x, const Eigen::VectorXd& theta) {
  const Eigen::Index d = theta.size();
  Eigen::VectorXd feat = theta;
  feat(d - 1) = 0.0;  // drop the intercept weight from the norm
  const double r = std::max(feat.norm(), 1e-3);
  NormalizedMargin out;
  Eigen::VectorXd z = x * theta;
  out.t = z / r;
  out.jac = x / r;
  out.jac.noalias() -= (z / (r * r * r)) * feat.transpose();
  return out;
}

}  // namespace

solver::SampleFunction rate_constraint_surrogate(const RateConstraintSpec& spec,
                                                 const LabeledDataset& ds, int side) {
  if (side != 0 && side != 1)
    throw std::invalid_argument("rate_constraint_surrogate: side must be 0 or 1");
  const double sign = side == 0 ? 1.0 : -1.0;
  Eigen::VectorXd coef = sign * plug_in_coefficients(spec, ds);
  const double eps = spec.epsilon;
  const double a = spec.sigmoid_a;
  const auto kind = spec.surrogate;
  const Eigen::MatrixXd x = ds.features;
  solver::SampleFunction fn;
  fn.values = [coef, eps, a, kind, x](const Eigen::VectorXd& theta) {
    auto nm = normalized_margin(x, theta);
    Eigen::ArrayXd h = kind == SurrogateKind::sigmoid
                           ? sigmoid_array(a * nm.t.array())
                           : (nm.t.array() + 1.0).max(0.0);
    return ((coef.array() * h) - eps).matrix().eval();
  };
  fn.jacobian = [coef, a, kind, x](const Eigen::VectorXd& theta) {
    auto nm = normalized_margin(x, theta);
    Eigen::ArrayXd w;
    if (kind == SurrogateKind::sigmoid) {
      Eigen::ArrayXd s = sigmoid_array(a * nm.t.array());
      w = coef.array() * a * s * (1.0 - s);
    } else {
      w = coef.array() * (nm.t.array() > -1.0).cast<double>();
    }
    return Eigen::MatrixXd(w.matrix().asDiagonal() * nm.jac);
  };
  return fn;
}

solver::SampleFunction rate_constraint_true(const RateConstraintSpec& spec,
                                            const LabeledDataset& ds, int side) {
  if (side != 0 && side != 1)
    throw std::invalid_argument("rate_constraint_true: side must be 0 or 1");
  const double sign = side == 0 ? 1.0 : -1.0;
  Eigen::VectorXd coef = sign * plug_in_coefficients(spec, ds);
  const double eps = spec.epsilon;
  const Eigen::MatrixXd x = ds.features;
  solver::SampleFunction fn;
  fn.values = [coef, eps, x](const Eigen::VectorXd& theta) {
    Eigen::VectorXd z = x * theta;
    Eigen::VectorXd out(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i)
      out(i) = coef(i) * (z(i) >= 0.0 ? 1.0 : 0.0) - eps;
    return out;
  };
  fn.jacobian = [x](const Eigen::VectorXd&) {
    return Eigen::MatrixXd::Zero(x.rows(), x.cols()).eval();
  };
  return fn;
}

LabeledDataset bootstrap_replicate(const LabeledDataset& full, double rate,
                                   std::uint64_t seed) {
  validate_dataset(full);
  if (!(rate > 0.0 && rate <= 1.0))
    throw std::invalid_argument("bootstrap_replicate: rate must lie in (0, 1]");
  const Eigen::Index n = full.features.rows();
  const Eigen::Index m = static_cast<Eigen::Index>(std::floor(rate * static_cast<double>(n)));
  if (m < 1) throw std::invalid_argument("bootstrap_replicate: empty resample");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  LabeledDataset out;
  out.features.resize(m, full.features.cols());
  out.labels.resize(m);
  out.group.resize(m);
  out.feature_names = full.feature_names;
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::Index j = pick(rng);
    out.features.row(i) = full.features.row(j);
    out.labels(i) = full.labels(j);
    out.group(i) = full.group(j);
  }
  return out;
}

double population_fairness_gap(const Eigen::VectorXd& theta, const LabeledDataset& full,
                               RateConstraintKind kind) {
  Eigen::VectorXi yhat = predict(theta, full);
  double hit1 = 0.0, tot1 = 0.0, hit0 = 0.0, tot0 = 0.0;
  for (Eigen::Index i = 0; i < yhat.size(); ++i) {
    if (!in_condition(kind, full.labels(i))) continue;
    if (full.group(i) == 1) {
      tot1 += 1.0;
      hit1 += yhat(i);
    } else {
      tot0 += 1.0;
      hit0 += yhat(i);
    }
  }
  if (tot1 == 0.0 || tot0 == 0.0)
    throw std::domain_error("population_fairness_gap: empty conditioning cell");
  return std::abs(hit1 / tot1 - hit0 / tot0);
}

solver::RobustProgram make_fairness_program(const LabeledDataset& ds,
                                            const RateConstraintSpec& spec,
                                            const Eigen::Vector2d& rho_pair) {
  validate_dataset(ds);
  solver::RobustProgram program;
  program.sample_count = ds.features.rows();
  program.objective.values = [ds](const Eigen::VectorXd& th) {
    return logistic_objective_samples(th, ds);
  };
  program.objective.jacobian = [ds](const Eigen::VectorXd& th) {
    return logistic_jacobian_samples(th, ds);
  };
  for (int side = 0; side < 2; ++side) {
    solver::ConstraintSpec c;
    c.g = rate_constraint_true(spec, ds, side);
    c.surrogate = rate_constraint_surrogate(spec, ds, side);
    c.rho = rho_pair(side);
    c.differentiable = false;
    c.name = side == 0 ? "rate+" : "rate-";
    program.constraints.push_back(std::move(c));
  }
  const Eigen::Index d = ds.features.cols();
  program.box_lower = Eigen::VectorXd::Constant(d, -50.0);
  program.box_upper = Eigen::VectorXd::Constant(d, 50.0);
  program.theta_init = Eigen::VectorXd::Zero(d);
  return program;
}

}  // namespace drocal::fairness
