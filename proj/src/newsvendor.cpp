#include "drocal/newsvendor.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <random>
#include <stdexcept>

namespace drocal::newsvendor {

namespace {

Eigen::MatrixXd exchangeable_cholesky(const NewsvendorSpec& spec) {
  const int d = spec.dims;
  const double r = spec.demand.exchangeable_r;
  Eigen::MatrixXd sigma =
      spec.demand.variance_scale *
      ((1.0 - r) * Eigen::MatrixXd::Identity(d, d) + r * Eigen::MatrixXd::Ones(d, d));
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success)
    throw std::domain_error("newsvendor: exchangeable covariance is not positive definite");
  return llt.matrixL();
}

Eigen::VectorXd group_norms_sq(const NewsvendorSpec& spec, const Eigen::MatrixXd& samples,
                               int group) {
  const auto& idx = spec.groups[static_cast<std::size_t>(group)];
  Eigen::VectorXd out = Eigen::VectorXd::Zero(samples.rows());
  for (int j : idx) out.array() += samples.col(j).array().square();
  return out;
}

double theta_norm_sq(const NewsvendorSpec& spec, const Eigen::VectorXd& theta, int group) {
  double acc = 0.0;
  for (int j : spec.groups[static_cast<std::size_t>(group)]) acc += theta(j) * theta(j);
  return acc;
}

}  // namespace

NewsvendorSpec single_item_spec() {
  NewsvendorSpec spec;
  spec.dims = 1;
  spec.cost = Eigen::VectorXd::Constant(1, 1.0);
  spec.price = Eigen::VectorXd::Constant(1, 2.0);
  spec.epsilon = Eigen::VectorXd::Constant(1, 1.0);
  spec.groups = {{0}};
  spec.demand.kind = DemandModel::Kind::exponential;
  spec.demand.exp_mean = 10.0;
  validate_spec(spec);
  return spec;
}

NewsvendorSpec multi_item_spec(int dims, double r, const Eigen::VectorXd& epsilon) {
  if (dims < 2 || dims % 2 != 0)
    throw std::invalid_argument("multi_item_spec: dims must be even and >= 2");
  NewsvendorSpec spec;
  spec.dims = dims;
  spec.cost = Eigen::VectorXd::Constant(dims, 1.0);
  spec.price = Eigen::VectorXd::Constant(dims, 2.0);
  spec.epsilon = epsilon;
  std::vector<int> a, b;
  for (int j = 0; j < dims / 2; ++j) a.push_back(j);
  for (int j = dims / 2; j < dims; ++j) b.push_back(j);
  spec.groups = {a, b};
  spec.demand.kind = DemandModel::Kind::gaussian;
  spec.demand.gauss_mean = Eigen::VectorXd::Constant(dims, 10.0);
  spec.demand.variance_scale = 9.0;
  spec.demand.exchangeable_r = r;
  validate_spec(spec);
  return spec;
}

void validate_spec(const NewsvendorSpec& spec) {
  const int d = spec.dims;
  if (d < 1) throw std::invalid_argument("newsvendor: dims must be >= 1");
  if (spec.cost.size() != d || spec.price.size() != d)
    throw std::invalid_argument("newsvendor: cost/price length mismatch");
  if ((spec.cost.array() <= 0.0).any())
    throw std::invalid_argument("newsvendor: cost must be positive");
  if ((spec.price.array() < spec.cost.array()).any())
    throw std::invalid_argument("newsvendor: price must dominate cost");
  if (spec.epsilon.size() != static_cast<Eigen::Index>(spec.groups.size()))
    throw std::invalid_argument("newsvendor: one epsilon per group required");
  if ((spec.epsilon.array() <= 0.0).any())
    throw std::invalid_argument("newsvendor: epsilon must be positive");
  std::vector<int> seen(static_cast<std::size_t>(d), 0);
  for (const auto& g : spec.groups) {
    if (g.empty()) throw std::invalid_argument("newsvendor: empty group");
    for (int j : g) {
      if (j < 0 || j >= d) throw std::invalid_argument("newsvendor: group index out of range");
      if (seen[static_cast<std::size_t>(j)]++)
        throw std::invalid_argument("newsvendor: groups must be disjoint");
    }
  }
  for (int count : seen)
    if (!count) throw std::invalid_argument("newsvendor: groups must cover every item");
  if (spec.demand.kind == DemandModel::Kind::exponential) {
    if (d != 1)
      throw std::invalid_argument("newsvendor: exponential demand is single-item only");
    if (spec.demand.exp_mean <= 0.0)
      throw std::invalid_argument("newsvendor: exponential mean must be positive");
  } else {
    if (spec.demand.gauss_mean.size() != d)
      throw std::invalid_argument("newsvendor: gaussian mean length mismatch");
    if (spec.demand.variance_scale <= 0.0)
      throw std::invalid_argument("newsvendor: variance scale must be positive");
    const double r = spec.demand.exchangeable_r;
    if (d > 1 && (r <= -1.0 / (d - 1.0) || r > 1.0))
      throw std::invalid_argument("newsvendor: exchangeable correlation out of range");
  }
  if (!(spec.theta_lo < spec.theta_hi))
    throw std::invalid_argument("newsvendor: empty stock box");
}

Eigen::MatrixXd sample_demand(const NewsvendorSpec& spec, Eigen::Index n, std::uint64_t seed) {
  validate_spec(spec);
  if (n < 1) throw std::invalid_argument("sample_demand: n must be >= 1");
  std::mt19937_64 rng(seed);
  Eigen::MatrixXd out(n, spec.dims);
  if (spec.demand.kind == DemandModel::Kind::exponential) {
    std::exponential_distribution<double> expo(1.0 / spec.demand.exp_mean);
    for (Eigen::Index i = 0; i < n; ++i) out(i, 0) = expo(rng);
    return out;
  }
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd chol = exchangeable_cholesky(spec);
  Eigen::VectorXd xi(spec.dims);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < spec.dims; ++j) xi(j) = gauss(rng);
    out.row(i) = (spec.demand.gauss_mean + chol * xi).transpose();
  }
  return out;
}

Eigen::VectorXd objective_samples(const NewsvendorSpec& spec, const Eigen::VectorXd& theta,
                                  const Eigen::MatrixXd& samples) {
  const double base = spec.cost.dot(theta);
  Eigen::VectorXd out(samples.rows());
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    out(i) = base - spec.price.dot(samples.row(i).transpose().cwiseMin(theta));
  }
  return out;
}

Eigen::MatrixXd objective_jacobian(const NewsvendorSpec& spec, const Eigen::VectorXd& theta,
                                   const Eigen::MatrixXd& samples) {
  Eigen::MatrixXd out(samples.rows(), spec.dims);
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    for (int j = 0; j < spec.dims; ++j) {
      out(i, j) = spec.cost(j) - (theta(j) < samples(i, j) ? spec.price(j) : 0.0);
    }
  }
  return out;
}

Eigen::VectorXd constraint_samples(const NewsvendorSpec& spec, const Eigen::VectorXd& theta,
                                   const Eigen::MatrixXd& samples, int group) {
  if (group < 0 || group >= static_cast<int>(spec.groups.size()))
    throw std::invalid_argument("constraint_samples: bad group index");
  const double eps = spec.epsilon(group);
  if (spec.dims == 1) {
    return ((samples.col(0).array() - theta(0)).max(0.0) - eps).matrix();
  }
  Eigen::VectorXd norms = group_norms_sq(spec, samples, group);
  const double tn = theta_norm_sq(spec, theta, group);
  return ((norms.array() - tn).max(0.0) - eps).matrix();
}

Eigen::MatrixXd constraint_jacobian(const NewsvendorSpec& spec, const Eigen::VectorXd& theta,
                                    const Eigen::MatrixXd& samples, int group) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(samples.rows(), spec.dims);
  if (spec.dims == 1) {
    for (Eigen::Index i = 0; i < samples.rows(); ++i)
      out(i, 0) = samples(i, 0) > theta(0) ? -1.0 : 0.0;
    return out;
  }
  Eigen::VectorXd norms = group_norms_sq(spec, samples, group);
  const double tn = theta_norm_sq(spec, theta, group);
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    if (norms(i) > tn) {
      for (int j : spec.groups[static_cast<std::size_t>(group)]) out(i, j) = -2.0 * theta(j);
    }
  }
  return out;
}

std::vector<PopulationValue> population_constraints(const NewsvendorSpec& spec,
                                                    const Eigen::VectorXd& theta,
                                                    std::int64_t oracle_draws,
                                                    std::uint64_t seed) {
  const auto n_groups = spec.groups.size();
  if (spec.demand.kind == DemandModel::Kind::exponential) {
    const double m = spec.demand.exp_mean;
    return {PopulationValue{m * std::exp(-theta(0) / m) - spec.epsilon(0), 0.0}};
  }
  if (oracle_draws < 1000000)
    throw std::invalid_argument("population_constraint: oracle needs at least 1e6 draws");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd chol = exchangeable_cholesky(spec);
  std::vector<double> tn(n_groups), mean(n_groups, 0.0), m2(n_groups, 0.0);
  for (std::size_t g = 0; g < n_groups; ++g)
    tn[g] = theta_norm_sq(spec, theta, static_cast<int>(g));
  Eigen::VectorXd xi(spec.dims), z(spec.dims);
  for (std::int64_t i = 0; i < oracle_draws; ++i) {
    for (int j = 0; j < spec.dims; ++j) xi(j) = gauss(rng);
    z.noalias() = chol * xi;
    z += spec.demand.gauss_mean;
    for (std::size_t g = 0; g < n_groups; ++g) {
      double nsq = 0.0;
      for (int j : spec.groups[g]) nsq += z(j) * z(j);
      const double val = std::max(nsq - tn[g], 0.0) - spec.epsilon(static_cast<Eigen::Index>(g));
      const double delta = val - mean[g];
      mean[g] += delta / static_cast<double>(i + 1);
      m2[g] += delta * (val - mean[g]);
    }
  }
  std::vector<PopulationValue> out(n_groups);
  for (std::size_t g = 0; g < n_groups; ++g) {
    const double var = m2[g] / static_cast<double>(oracle_draws);
    out[g] = {mean[g], std::sqrt(var / static_cast<double>(oracle_draws))};
  }
  return out;
}

PopulationValue population_constraint(const NewsvendorSpec& spec, const Eigen::VectorXd& theta,
                                      int group, std::int64_t oracle_draws, std::uint64_t seed) {
  if (group < 0 || group >= static_cast<int>(spec.groups.size()))
    throw std::invalid_argument("population_constraint: bad group index");
  if (spec.demand.kind == DemandModel::Kind::exponential) {
    const double m = spec.demand.exp_mean;
    return {m * std::exp(-theta(0) / m) - spec.epsilon(group), 0.0};
  }
  return population_constraints(spec, theta, oracle_draws,
                                seed)[static_cast<std::size_t>(group)];
}

double single_item_population_optimum(const NewsvendorSpec& spec) {
  if (spec.demand.kind != DemandModel::Kind::exponential)
    throw std::invalid_argument("single_item_population_optimum: exponential demand only");
  return spec.demand.exp_mean * std::log(spec.demand.exp_mean / spec.epsilon(0));
}

double single_item_unconstrained_optimum(const NewsvendorSpec& spec) {
  if (spec.demand.kind != DemandModel::Kind::exponential)
    throw std::invalid_argument("single_item_unconstrained_optimum: exponential demand only");
  return spec.demand.exp_mean * std::log(spec.price(0) / (spec.price(0) - spec.cost(0)));
}

double single_item_constraint_sd(const NewsvendorSpec& spec, double theta) {
  if (spec.demand.kind != DemandModel::Kind::exponential)
    throw std::invalid_argument("single_item_constraint_sd: exponential demand only");
  const double m = spec.demand.exp_mean;
  const double tail = std::exp(-theta / m);
  // E (Z - theta)_+ = m tail, E (Z - theta)_+^2 = 2 m^2 tail.
  return std::sqrt(m * m * tail * (2.0 - tail));
}

solver::RobustProgram make_program(const NewsvendorSpec& spec, const Eigen::MatrixXd& samples,
                                   const Eigen::VectorXd& radii) {
  validate_spec(spec);
  if (samples.cols() != spec.dims)
    throw std::invalid_argument("make_program: sample dimension mismatch");
  if (radii.size() != static_cast<Eigen::Index>(spec.groups.size()))
    throw std::invalid_argument("make_program: one radius per group required");

  solver::RobustProgram program;
  program.sample_count = samples.rows();
  // Hot path of the solver: columnwise expressions, group norms precomputed.
  program.objective.values = [spec, samples](const Eigen::VectorXd& th) {
    Eigen::VectorXd out = Eigen::VectorXd::Constant(samples.rows(), spec.cost.dot(th));
    for (int j = 0; j < spec.dims; ++j)
      out.noalias() -= spec.price(j) * samples.col(j).cwiseMin(th(j));
    return out;
  };
  program.objective.jacobian = [spec, samples](const Eigen::VectorXd& th) {
    Eigen::MatrixXd out(samples.rows(), spec.dims);
    for (int j = 0; j < spec.dims; ++j)
      out.col(j) = (samples.col(j).array() > th(j))
                       .select(spec.cost(j) - spec.price(j),
                               Eigen::ArrayXd::Constant(samples.rows(), spec.cost(j)));
    return out;
  };
  for (int g = 0; g < static_cast<int>(spec.groups.size()); ++g) {
    const bool single = spec.dims == 1;
    Eigen::VectorXd norms =
        single ? Eigen::VectorXd(samples.col(0)) : group_norms_sq(spec, samples, g);
    const double eps = spec.epsilon(g);
    const auto group_idx = spec.groups[static_cast<std::size_t>(g)];
    solver::ConstraintSpec c;
    c.g.values = [spec, norms, eps, g, single](const Eigen::VectorXd& th) {
      const double tn = single ? th(0) : theta_norm_sq(spec, th, g);
      return Eigen::VectorXd((norms.array() - tn).max(0.0) - eps);
    };
    c.g.jacobian = [spec, norms, g, single, group_idx](const Eigen::VectorXd& th) {
      Eigen::MatrixXd out = Eigen::MatrixXd::Zero(norms.size(), spec.dims);
      if (single) {
        out.col(0) = (norms.array() > th(0)).cast<double>() * -1.0;
        return out;
      }
      const double tn = theta_norm_sq(spec, th, g);
      Eigen::ArrayXd live = (norms.array() > tn).cast<double>();
      for (int j : group_idx) out.col(j) = -2.0 * th(j) * live;
      return out;
    };
    c.rho = radii(g);
    c.name = "group" + std::to_string(g);
    program.constraints.push_back(std::move(c));
  }
  program.box_lower = Eigen::VectorXd::Constant(spec.dims, spec.theta_lo);
  program.box_upper = Eigen::VectorXd::Constant(spec.dims, spec.theta_hi);
  program.theta_init =
      samples.colwise().mean().transpose().cwiseMax(program.box_lower).cwiseMin(
          program.box_upper);
  return program;
}

}  // namespace drocal::newsvendor
