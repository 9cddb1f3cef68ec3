#pragma once

#include <span>
#include <vector>

#include "mte/kernel.hpp"
#include "mte/sample.hpp"

namespace mte {

/// Denominators below this are treated as zero.
inline constexpr double kDenominatorFloor = 1e-300;

/// Nadaraya-Watson estimate of the order-th y-derivative of f(y | D = arm, X = x).
double cond_density_at(const Sample& sample, int arm, const KernelSpec& spec, double y,
                       std::span<const double> x, int order);

/// Per-observation covariate kernel mass of each arm:
/// den[arm][i] = sum_{j : D_j = arm} K_h(X_i - X_j), summed in index order.
struct CovariateDenominators {
  std::vector<double> arm0;
  std::vector<double> arm1;

  const std::vector<double>& operator[](int arm) const { return arm == 1 ? arm1 : arm0; }
};

CovariateDenominators covariate_denominators(const Sample& sample, const KernelSpec& spec);

/// The marginal plug-in density of one arm,
///   f(y) = n^-1 sum_i f(y | D = arm, X_i),
/// collapsed to a weighted kernel sum over that arm's outcomes:
///   f^(s)(y) = sum_{j in arm} w_j K_h^(s)(y - Y_j),
///   w_j = n^-1 sum_i K_h(X_i - X_j) / den[arm][i].
/// The optional inverse-propensity weights additionally divide by the arm
/// propensity at X_i and give n^-1 sum_i f(y | D = arm, X_i) / p_arm(X_i).
class ArmDensity {
public:
  ArmDensity(int arm, KernelSpec spec, std::vector<double> outcomes, std::vector<double> weights,
             std::vector<double> ipw_weights);

  int arm() const noexcept { return arm_; }
  const KernelSpec& spec() const noexcept { return spec_; }
  const std::vector<double>& outcomes() const noexcept { return outcomes_; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  bool has_ipw() const noexcept { return !ipw_weights_.empty(); }

  /// Order-th derivative of the marginal density at y.
  double at(double y, int order) const;
  /// n^-1 sum_i f^(order)(y | D = arm, X_i) / p_arm(X_i).
  double ipw_at(double y, int order) const;

  DensityCurve curve(std::span<const double> grid, int order) const;

private:
  int arm_;
  KernelSpec spec_;
  std::vector<double> outcomes_;
  std::vector<double> weights_;
  std::vector<double> ipw_weights_;
};

/// Builds the collapsed marginal estimator of `arm`. When `arm_propensity` is
/// non-empty it must hold p_arm(X_i) for every observation i and the
/// inverse-propensity weights are filled as well.
ArmDensity fit_arm_density(const Sample& sample, int arm, const KernelSpec& spec,
                           const CovariateDenominators& denominators,
                           std::span<const double> arm_propensity = {});

/// Marginal density curve f_{Y_arm} (or derivative) on `grid`.
DensityCurve marginal_density_curve(const Sample& sample, int arm, const KernelSpec& spec,
                                    std::span<const double> grid, int order);

}  // namespace mte
