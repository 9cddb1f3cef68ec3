#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mte/kernel.hpp"
#include "mte/sample.hpp"

namespace mte {

inline constexpr double kDefaultClipKappa = 0.01;

/// min(max(p, kappa), 1 - kappa).
double clip_propensity(double p, double kappa);

enum class PropensityLearner { Logistic, KNN, KernelNW };
enum class OutcomeLearner { Ridge, KNN };

std::string_view to_string(PropensityLearner learner);
std::string_view to_string(OutcomeLearner learner);
PropensityLearner parse_propensity_learner(std::string_view name);
OutcomeLearner parse_outcome_learner(std::string_view name);

struct PropensityHyper {
  /// L2 penalty on logistic slopes; <= 0 selects 1e-4 * n.
  double lambda = 0.0;
  /// Neighbours for KNN; 0 selects ceil(n^0.6).
  std::size_t k = 0;
  /// Bandwidth for KernelNW (required for that learner).
  double h = 0.0;
  KernelFamily family = KernelFamily::Gaussian;
  int max_iterations = 100;
  /// Convergence threshold on the Euclidean norm of the mean-log-likelihood gradient.
  double tolerance = 1e-8;
  double clip_kappa = kDefaultClipKappa;
};

/// P(D = 1 | x) and P(D = 0 | x), each computed from its own arm so that
/// flipping D maps one onto the other exactly.
struct ArmPropensity {
  double treated;
  double control;
};

/// A fitted propensity model. `raw` is the learner output; `predict` clips it.
class PropensityFit {
public:
  /// The control probability is taken as 1 - p.
  PropensityFit(std::string learner_id, double clip_kappa,
                std::function<double(std::span<const double>)> raw);
  PropensityFit(std::string learner_id, double clip_kappa,
                std::function<ArmPropensity(std::span<const double>)> raw);

  const std::string& learner_id() const noexcept { return learner_id_; }
  double clip_kappa() const noexcept { return clip_kappa_; }
  double raw(std::span<const double> x) const { return raw_(x).treated; }
  double predict(std::span<const double> x) const { return predict_arm(x, 1); }
  /// Clipped probability of receiving `arm`.
  double predict_arm(std::span<const double> x, int arm) const {
    const ArmPropensity p = raw_(x);
    return clip_propensity(arm == 1 ? p.treated : p.control, clip_kappa_);
  }

private:
  std::string learner_id_;
  double clip_kappa_;
  std::function<ArmPropensity(std::span<const double>)> raw_;
};

/// Logistic coefficients: intercept first, then one slope per covariate.
struct LogisticModel {
  std::vector<double> coef;
  int iterations = 0;
  double probability(std::span<const double> x) const;
};

LogisticModel fit_logistic(const Sample& subset, double lambda, int max_iterations,
                           double tolerance);

PropensityFit fit_propensity(const Sample& subset, PropensityLearner learner,
                             const PropensityHyper& hyper = {});

struct OutcomeHyper {
  /// Ridge penalty on centred slopes; <= 0 selects 1e-4 * n.
  double lambda = 0.0;
  /// Neighbours for KNN; 0 selects ceil(n^0.6).
  std::size_t k = 0;
};

/// Regression of the smoothed targets K_h^(s)(y_j - Y) on X within one arm,
/// for every grid point y_j and every requested order s.
class SmoothedOutcomeFit {
public:
  class Model {
  public:
    virtual ~Model() = default;
    /// Predictions at x for grid columns [first, first + out.size()) of `order`.
    virtual void predict(std::span<const double> x, int order, std::size_t first,
                         std::span<double> out) const = 0;
  };

  SmoothedOutcomeFit(std::vector<double> grid, int arm, KernelSpec spec, std::vector<int> orders,
                     std::string learner_id, std::shared_ptr<const Model> model);

  const std::vector<double>& grid() const noexcept { return grid_; }
  int arm() const noexcept { return arm_; }
  double h() const noexcept { return spec_.h(); }
  const KernelSpec& spec() const noexcept { return spec_; }
  const std::string& learner_id() const noexcept { return learner_id_; }
  bool has_order(int order) const;

  double predict(std::span<const double> x, std::size_t grid_index, int order) const;
  /// Whole-grid prediction of `order` at x.
  void predict_grid(std::span<const double> x, int order, std::span<double> out) const;
  /// Off-grid query by linear interpolation between neighbouring grid
  /// predictions; clamped to the end values outside the grid.
  double predict_at(std::span<const double> x, double y, int order) const;

private:
  void check_order(int order) const;

  std::vector<double> grid_;
  int arm_;
  KernelSpec spec_;
  std::vector<int> orders_;
  std::string learner_id_;
  std::shared_ptr<const Model> model_;
};

/// `subset` must contain only observations of `arm`.
SmoothedOutcomeFit fit_smoothed_outcome(const Sample& subset, int arm,
                                        std::span<const double> grid, const KernelSpec& spec,
                                        OutcomeLearner learner, const OutcomeHyper& hyper = {},
                                        std::vector<int> orders = {0, 1, 2});

/// Indices of the k nearest rows of `subset` to x (Euclidean), ties broken by
/// index, returned in increasing index order.
std::vector<std::size_t> nearest_neighbours(const Sample& subset, std::span<const double> x,
                                            std::size_t k);

}  // namespace mte
