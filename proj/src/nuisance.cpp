#include "mte/nuisance.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "mte/errors.hpp"

namespace mte {

double clip_propensity(double p, double kappa) { return std::min(std::max(p, kappa), 1.0 - kappa); }

std::string_view to_string(PropensityLearner learner) {
  switch (learner) {
    case PropensityLearner::Logistic: return "logistic";
    case PropensityLearner::KNN: return "knn";
    case PropensityLearner::KernelNW: return "kernel";
  }
  return "unknown";
}

std::string_view to_string(OutcomeLearner learner) {
  return learner == OutcomeLearner::Ridge ? "ridge" : "knn";
}

PropensityLearner parse_propensity_learner(std::string_view name) {
  if (name == "logistic") return PropensityLearner::Logistic;
  if (name == "knn") return PropensityLearner::KNN;
  if (name == "kernel") return PropensityLearner::KernelNW;
  throw std::invalid_argument("unknown propensity learner '" + std::string(name) + "'");
}

OutcomeLearner parse_outcome_learner(std::string_view name) {
  if (name == "ridge") return OutcomeLearner::Ridge;
  if (name == "knn") return OutcomeLearner::KNN;
  throw std::invalid_argument("unknown outcome learner '" + std::string(name) + "'");
}

PropensityFit::PropensityFit(std::string learner_id, double clip_kappa,
                             std::function<double(std::span<const double>)> raw)
    : PropensityFit(std::move(learner_id), clip_kappa,
                    [raw = std::move(raw)](std::span<const double> x) {
                      const double p = raw(x);
                      return ArmPropensity{p, 1.0 - p};
                    }) {}

PropensityFit::PropensityFit(std::string learner_id, double clip_kappa,
                             std::function<ArmPropensity(std::span<const double>)> raw)
    : learner_id_(std::move(learner_id)), clip_kappa_(clip_kappa), raw_(std::move(raw)) {
  // kappa = 0 disables clipping (diagnostic use only).
  if (!(clip_kappa >= 0.0 && clip_kappa < 0.5))
    throw std::invalid_argument("clip kappa must lie in [0, 0.5)");
}

namespace {

std::size_t default_k(std::size_t n, std::size_t k) {
  if (k == 0) k = static_cast<std::size_t>(std::ceil(std::pow(static_cast<double>(n), 0.6)));
  return std::clamp<std::size_t>(k, 1, n);
}

double default_lambda(std::size_t n, double lambda) {
  return lambda > 0.0 ? lambda : 1e-4 * static_cast<double>(n);
}

Eigen::MatrixXd design_with_intercept(const Sample& s) {
  Eigen::MatrixXd z(s.size(), s.dim() + 1);
  for (std::size_t i = 0; i < s.size(); ++i) {
    z(i, 0) = 1.0;
    auto x = s.x(i);
    for (std::size_t k = 0; k < s.dim(); ++k) z(i, k + 1) = x[k];
  }
  return z;
}

double sigmoid(double eta) {
  return eta >= 0.0 ? 1.0 / (1.0 + std::exp(-eta)) : std::exp(eta) / (1.0 + std::exp(eta));
}

}  // namespace

double LogisticModel::probability(std::span<const double> x) const {
  if (x.size() + 1 != coef.size()) throw std::invalid_argument("covariate dimension mismatch");
  double eta = coef[0];
  for (std::size_t k = 0; k < x.size(); ++k) eta += coef[k + 1] * x[k];
  return sigmoid(eta);
}

LogisticModel fit_logistic(const Sample& subset, double lambda, int max_iterations,
                           double tolerance) {
  const std::size_t n = subset.size();
  const Eigen::Index p = static_cast<Eigen::Index>(subset.dim() + 1);
  const Eigen::MatrixXd z = design_with_intercept(subset);
  Eigen::VectorXd d(n);
  for (std::size_t i = 0; i < n; ++i) d(i) = subset.d(i);
  Eigen::VectorXd penalty = Eigen::VectorXd::Constant(p, lambda);
  penalty(0) = 0.0;

  // Penalized mean log-likelihood.
  auto objective = [&](const Eigen::VectorXd& beta) {
    const Eigen::VectorXd eta = z * beta;
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = eta(i);
      // log(1 + exp(e)) computed stably.
      const double softplus = e > 0.0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
      ll += d(i) * e - softplus;
    }
    return (ll - 0.5 * beta.dot(penalty.cwiseProduct(beta))) / static_cast<double>(n);
  };

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  double current = objective(beta);
  for (int iter = 0; iter < max_iterations; ++iter) {
    const Eigen::VectorXd eta = z * beta;
    Eigen::VectorXd prob(n), w(n);
    for (std::size_t i = 0; i < n; ++i) {
      prob(i) = sigmoid(eta(i));
      w(i) = prob(i) * (1.0 - prob(i));
    }
    const Eigen::VectorXd grad =
        (z.transpose() * (d - prob) - penalty.cwiseProduct(beta)) / static_cast<double>(n);
    if (grad.norm() <= tolerance) return {{beta.data(), beta.data() + p}, iter};

    Eigen::MatrixXd info = z.transpose() * w.asDiagonal() * z;
    info.diagonal() += penalty;
    info /= static_cast<double>(n);
    const Eigen::VectorXd step = info.ldlt().solve(grad);

    // Near the optimum the objective change drops below round-off; such
    // steps are accepted and the gradient test decides.
    const double slack = 1e-13 * (1.0 + std::abs(current));
    double scale = 1.0;
    Eigen::VectorXd candidate = beta + step;
    double value = objective(candidate);
    for (int halving = 0; halving < 30 && !(value >= current - slack); ++halving) {
      scale *= 0.5;
      candidate = beta + scale * step;
      value = objective(candidate);
    }
    if (!(value >= current - slack)) break;
    beta = candidate;
    current = value;
  }
  throw ConvergenceError(max_iterations, "logistic propensity fit did not converge within " +
                                             std::to_string(max_iterations) + " iterations");
}

std::vector<std::size_t> nearest_neighbours(const Sample& subset, std::span<const double> x,
                                            std::size_t k) {
  const std::size_t n = subset.size();
  if (x.size() != subset.dim()) throw std::invalid_argument("covariate dimension mismatch");
  k = std::min(k, n);
  std::vector<std::pair<double, std::size_t>> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto xi = subset.x(i);
    double s = 0.0;
    for (std::size_t c = 0; c < x.size(); ++c) s += (xi[c] - x[c]) * (xi[c] - x[c]);
    dist[i] = {s, i};
  }
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
  std::vector<std::size_t> idx(k);
  for (std::size_t j = 0; j < k; ++j) idx[j] = dist[j].second;
  std::sort(idx.begin(), idx.end());
  return idx;
}

PropensityFit fit_propensity(const Sample& subset, PropensityLearner learner,
                             const PropensityHyper& hyper) {
  if (subset.count_arm(1) == 0 || subset.count_arm(0) == 0)
    throw NoOverlapError("propensity fit needs both treatment values in its sample");
  const std::size_t n = subset.size();
  const std::string id(to_string(learner));

  switch (learner) {
    case PropensityLearner::Logistic: {
      auto model = std::make_shared<const LogisticModel>(fit_logistic(
          subset, default_lambda(n, hyper.lambda), hyper.max_iterations, hyper.tolerance));
      return PropensityFit(id, hyper.clip_kappa,
                           [model](std::span<const double> x) {
                             const double p = model->probability(x);
                             return ArmPropensity{p, 1.0 - p};
                           });
    }
    case PropensityLearner::KNN: {
      auto data = std::make_shared<const Sample>(subset);
      const std::size_t k = default_k(n, hyper.k);
      return PropensityFit(id, hyper.clip_kappa, [data, k](std::span<const double> x) {
        const auto nb = nearest_neighbours(*data, x, k);
        std::size_t treated = 0;
        for (std::size_t j : nb) treated += static_cast<std::size_t>(data->d(j));
        const double k_used = static_cast<double>(nb.size());
        return ArmPropensity{static_cast<double>(treated) / k_used,
                             static_cast<double>(nb.size() - treated) / k_used};
      });
    }
    case PropensityLearner::KernelNW: {
      auto data = std::make_shared<const Sample>(subset);
      const KernelSpec spec(hyper.family, hyper.h);
      return PropensityFit(id, hyper.clip_kappa, [data, spec](std::span<const double> x) {
        std::vector<double> diff(x.size());
        double num1 = 0.0;
        double num0 = 0.0;
        for (std::size_t j = 0; j < data->size(); ++j) {
          auto xj = data->x(j);
          for (std::size_t c = 0; c < diff.size(); ++c) diff[c] = x[c] - xj[c];
          const double w = product_kernel(spec, diff);
          (data->d(j) == 1 ? num1 : num0) += w;
        }
        const double den = num1 + num0;
        if (!(den >= 1e-300))
          throw DegenerateLocalityError(1, data->size(),
                                        "no covariate mass for the kernel propensity");
        return ArmPropensity{num1 / den, num0 / den};
      });
    }
  }
  throw std::invalid_argument("unknown propensity learner");
}

// ---------------------------------------------------------------------------
// Smoothed-outcome regressions

namespace {

class RidgeOutcomeModel final : public SmoothedOutcomeFit::Model {
public:
  RidgeOutcomeModel(Eigen::VectorXd xbar, Eigen::VectorXd col_mean, Eigen::MatrixXd beta,
                    std::size_t grid_size, std::vector<int> slot)
      : xbar_(std::move(xbar)),
        col_mean_(std::move(col_mean)),
        beta_(std::move(beta)),
        grid_size_(grid_size),
        slot_(std::move(slot)) {}

  void predict(std::span<const double> x, int order, std::size_t first,
               std::span<double> out) const override {
    const std::size_t base = static_cast<std::size_t>(slot_[order]) * grid_size_ + first;
    const Eigen::Index dim = xbar_.size();
    for (std::size_t g = 0; g < out.size(); ++g) {
      const auto col = static_cast<Eigen::Index>(base + g);
      double v = col_mean_(col);
      for (Eigen::Index c = 0; c < dim; ++c) v += (x[c] - xbar_(c)) * beta_(c, col);
      out[g] = v;
    }
  }

private:
  Eigen::VectorXd xbar_;
  Eigen::VectorXd col_mean_;
  Eigen::MatrixXd beta_;  // dim x columns
  std::size_t grid_size_;
  std::vector<int> slot_;
};

class KnnOutcomeModel final : public SmoothedOutcomeFit::Model {
public:
  KnnOutcomeModel(Sample data, std::vector<double> grid, KernelSpec spec, std::size_t k)
      : data_(std::move(data)), grid_(std::move(grid)), spec_(spec), k_(k) {}

  void predict(std::span<const double> x, int order, std::size_t first,
               std::span<double> out) const override {
    const auto nb = nearest_neighbours(data_, x, k_);
    const double inv = 1.0 / static_cast<double>(nb.size());
    for (std::size_t g = 0; g < out.size(); ++g) {
      const double y = grid_[first + g];
      double s = 0.0;
      for (std::size_t j : nb) s += scaled_kernel(spec_, y - data_.y(j), order);
      out[g] = s * inv;
    }
  }

private:
  Sample data_;
  std::vector<double> grid_;
  KernelSpec spec_;
  std::size_t k_;
};

}  // namespace

SmoothedOutcomeFit::SmoothedOutcomeFit(std::vector<double> grid, int arm, KernelSpec spec,
                                       std::vector<int> orders, std::string learner_id,
                                       std::shared_ptr<const Model> model)
    : grid_(std::move(grid)),
      arm_(arm),
      spec_(spec),
      orders_(std::move(orders)),
      learner_id_(std::move(learner_id)),
      model_(std::move(model)) {}

bool SmoothedOutcomeFit::has_order(int order) const {
  return std::find(orders_.begin(), orders_.end(), order) != orders_.end();
}

void SmoothedOutcomeFit::check_order(int order) const {
  if (!has_order(order))
    throw std::invalid_argument("smoothed outcome was not fitted for order " +
                                std::to_string(order));
}

double SmoothedOutcomeFit::predict(std::span<const double> x, std::size_t grid_index,
                                   int order) const {
  check_order(order);
  if (grid_index >= grid_.size()) throw std::out_of_range("grid index out of range");
  double v = 0.0;
  model_->predict(x, order, grid_index, {&v, 1});
  return v;
}

void SmoothedOutcomeFit::predict_grid(std::span<const double> x, int order,
                                      std::span<double> out) const {
  check_order(order);
  if (out.size() != grid_.size()) throw std::invalid_argument("output does not match the grid");
  model_->predict(x, order, 0, out);
}

double SmoothedOutcomeFit::predict_at(std::span<const double> x, double y, int order) const {
  check_order(order);
  if (y <= grid_.front()) return predict(x, 0, order);
  if (y >= grid_.back()) return predict(x, grid_.size() - 1, order);
  const auto upper = std::upper_bound(grid_.begin(), grid_.end(), y);
  const std::size_t j = static_cast<std::size_t>(upper - grid_.begin()) - 1;
  double pair[2];
  model_->predict(x, order, j, pair);
  const double t = (y - grid_[j]) / (grid_[j + 1] - grid_[j]);
  return pair[0] + t * (pair[1] - pair[0]);
}

SmoothedOutcomeFit fit_smoothed_outcome(const Sample& subset, int arm,
                                        std::span<const double> grid, const KernelSpec& spec,
                                        OutcomeLearner learner, const OutcomeHyper& hyper,
                                        std::vector<int> orders) {
  if (subset.size() == 0) throw EmptyArmError("no data for the arm-" + std::to_string(arm) + " outcome fit");
  for (std::size_t i = 0; i < subset.size(); ++i)
    if (subset.d(i) != arm)
      throw std::invalid_argument("smoothed outcome fit received an observation from the other arm");
  validate_grid(grid);
  std::sort(orders.begin(), orders.end());
  orders.erase(std::unique(orders.begin(), orders.end()), orders.end());
  if (orders.empty()) throw std::invalid_argument("no derivative orders requested");
  std::vector<int> slot(3, -1);
  for (std::size_t s = 0; s < orders.size(); ++s) {
    if (orders[s] < 0 || orders[s] > 2) throw std::invalid_argument("orders must lie in {0,1,2}");
    slot[orders[s]] = static_cast<int>(s);
  }
  std::vector<double> grid_copy(grid.begin(), grid.end());
  const std::size_t n = subset.size();
  const std::size_t m = grid.size();
  const std::string id(to_string(learner));

  if (learner == OutcomeLearner::KNN) {
    auto model = std::make_shared<const KnnOutcomeModel>(subset, grid_copy, spec,
                                                         default_k(n, hyper.k));
    return SmoothedOutcomeFit(std::move(grid_copy), arm, spec, std::move(orders), id, model);
  }

  // Ridge on centred covariates with an unpenalized intercept. All targets
  // share the design, so one Cholesky factor serves every column.
  const Eigen::Index dim = static_cast<Eigen::Index>(subset.dim());
  const Eigen::Index cols = static_cast<Eigen::Index>(orders.size() * m);
  Eigen::VectorXd xbar = Eigen::VectorXd::Zero(dim);
  for (std::size_t i = 0; i < n; ++i)
    for (Eigen::Index c = 0; c < dim; ++c) xbar(c) += subset.x(i)[c];
  xbar /= static_cast<double>(n);

  Eigen::MatrixXd xc(static_cast<Eigen::Index>(n), dim);
  for (std::size_t i = 0; i < n; ++i)
    for (Eigen::Index c = 0; c < dim; ++c)
      xc(static_cast<Eigen::Index>(i), c) = subset.x(i)[c] - xbar(c);

  Eigen::VectorXd col_sum = Eigen::VectorXd::Zero(cols);
  Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(dim, cols);
  std::vector<double> target(static_cast<std::size_t>(cols));
  for (std::size_t i = 0; i < n; ++i) {
    const double yi = subset.y(i);
    for (std::size_t s = 0; s < orders.size(); ++s)
      for (std::size_t g = 0; g < m; ++g)
        target[s * m + g] = scaled_kernel(spec, grid[g] - yi, orders[s]);
    for (Eigen::Index col = 0; col < cols; ++col) {
      const double t = target[static_cast<std::size_t>(col)];
      col_sum(col) += t;
      for (Eigen::Index c = 0; c < dim; ++c) cross(c, col) += xc(static_cast<Eigen::Index>(i), c) * t;
    }
  }
  const Eigen::VectorXd col_mean = col_sum / static_cast<double>(n);

  Eigen::MatrixXd beta = Eigen::MatrixXd::Zero(dim, cols);
  if (dim > 0) {
    Eigen::MatrixXd gram = xc.transpose() * xc;
    gram.diagonal().array() += default_lambda(n, hyper.lambda);
    const Eigen::LLT<Eigen::MatrixXd> factor(gram);
    if (factor.info() != Eigen::Success)
      throw std::runtime_error("ridge normal equations are not positive definite");
    beta = factor.solve(cross);
  }
  auto model = std::make_shared<const RidgeOutcomeModel>(xbar, col_mean, std::move(beta), m, slot);
  return SmoothedOutcomeFit(std::move(grid_copy), arm, spec, std::move(orders), id, model);
}

}  // namespace mte
