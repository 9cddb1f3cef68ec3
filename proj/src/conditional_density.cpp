#include "mte/conditional_density.hpp"

#include <sstream>
#include <stdexcept>
#include <string>

#include "mte/errors.hpp"

namespace mte {

namespace {

// K_h(X_a - X_b) through product_kernel, reusing a scratch buffer.
class CovariateKernel {
public:
  CovariateKernel(const Sample& sample, const KernelSpec& spec)
      : sample_(sample), spec_(spec), diff_(sample.dim()) {
    if (sample.dim() == 0)
      throw std::invalid_argument("kernel smoothing over covariates needs at least one covariate");
  }

  double operator()(std::size_t a, std::size_t b) {
    auto xa = sample_.x(a);
    auto xb = sample_.x(b);
    for (std::size_t k = 0; k < diff_.size(); ++k) diff_[k] = xa[k] - xb[k];
    return product_kernel(spec_, diff_);
  }

private:
  const Sample& sample_;
  const KernelSpec& spec_;
  std::vector<double> diff_;
};

std::string describe_point(std::span<const double> x) {
  std::ostringstream os;
  os << '[';
  for (std::size_t k = 0; k < x.size(); ++k) os << (k ? ", " : "") << x[k];
  os << ']';
  return os.str();
}

void check_order(int order) {
  if (order < 0 || order > 2)
    throw std::invalid_argument("density derivative order must be 0, 1 or 2");
}

}  // namespace

double cond_density_at(const Sample& sample, int arm, const KernelSpec& spec, double y,
                       std::span<const double> x, int order) {
  check_order(order);
  sample.require_arm(arm);
  if (x.size() != sample.dim()) throw std::invalid_argument("query covariate has wrong dimension");
  if (x.empty()) throw std::invalid_argument("conditional density needs at least one covariate");
  std::vector<double> diff(x.size());
  double num = 0.0;
  double den = 0.0;
  for (std::size_t j = 0; j < sample.size(); ++j) {
    if (sample.d(j) != arm) continue;
    auto xj = sample.x(j);
    for (std::size_t k = 0; k < diff.size(); ++k) diff[k] = x[k] - xj[k];
    const double w = product_kernel(spec, diff);
    num += w * scaled_kernel(spec, y - sample.y(j), order);
    den += w;
  }
  if (!(den >= kDenominatorFloor))
    throw DegenerateLocalityError(arm, sample.size(),
                                  "no arm-" + std::to_string(arm) +
                                      " covariate mass near x=" + describe_point(x));
  return num / den;
}

CovariateDenominators covariate_denominators(const Sample& sample, const KernelSpec& spec) {
  const std::size_t n = sample.size();
  CovariateDenominators den{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  CovariateKernel kern(sample, spec);
  // Symmetric pass; for fixed i the terms still arrive in increasing j.
  for (std::size_t a = 0; a < n; ++a) {
    auto& row_a = sample.d(a) == 1 ? den.arm1 : den.arm0;
    for (std::size_t b = a; b < n; ++b) {
      const double w = kern(a, b);
      (sample.d(b) == 1 ? den.arm1 : den.arm0)[a] += w;
      if (b != a) row_a[b] += w;
    }
  }
  return den;
}

ArmDensity::ArmDensity(int arm, KernelSpec spec, std::vector<double> outcomes,
                       std::vector<double> weights, std::vector<double> ipw_weights)
    : arm_(arm),
      spec_(spec),
      outcomes_(std::move(outcomes)),
      weights_(std::move(weights)),
      ipw_weights_(std::move(ipw_weights)) {
  if (outcomes_.size() != weights_.size())
    throw std::invalid_argument("outcome/weight length mismatch");
  if (!ipw_weights_.empty() && ipw_weights_.size() != weights_.size())
    throw std::invalid_argument("outcome/ipw weight length mismatch");
}

double ArmDensity::at(double y, int order) const {
  check_order(order);
  double s = 0.0;
  for (std::size_t j = 0; j < outcomes_.size(); ++j)
    s += weights_[j] * scaled_kernel(spec_, y - outcomes_[j], order);
  return s;
}

double ArmDensity::ipw_at(double y, int order) const {
  check_order(order);
  if (ipw_weights_.empty()) throw std::logic_error("arm density was fitted without propensities");
  double s = 0.0;
  for (std::size_t j = 0; j < outcomes_.size(); ++j)
    s += ipw_weights_[j] * scaled_kernel(spec_, y - outcomes_[j], order);
  return s;
}

DensityCurve ArmDensity::curve(std::span<const double> grid, int order) const {
  validate_grid(grid);
  DensityCurve c{std::vector<double>(grid.begin(), grid.end()), std::vector<double>(grid.size()),
                 arm_, order, spec_};
  for (std::size_t g = 0; g < grid.size(); ++g) c.values[g] = at(grid[g], order);
  return c;
}

ArmDensity fit_arm_density(const Sample& sample, int arm, const KernelSpec& spec,
                           const CovariateDenominators& denominators,
                           std::span<const double> arm_propensity) {
  if (arm != 0 && arm != 1) throw std::invalid_argument("arm must be 0 or 1");
  sample.require_arm(arm);
  const std::size_t n = sample.size();
  const auto& den = denominators[arm];
  if (den.size() != n) throw std::invalid_argument("denominators do not match the sample");
  const bool with_ipw = !arm_propensity.empty();
  if (with_ipw && arm_propensity.size() != n)
    throw std::invalid_argument("propensity vector does not match the sample");

  for (std::size_t i = 0; i < n; ++i) {
    if (!(den[i] >= kDenominatorFloor))
      throw DegenerateLocalityError(arm, i,
                                    "observation " + std::to_string(i) + ": no arm-" +
                                        std::to_string(arm) + " covariate mass near x=" +
                                        describe_point(sample.x(i)));
    if (with_ipw && !(arm_propensity[i] > 0.0 && arm_propensity[i] < 1.0))
      throw InvariantViolation("propensity outside (0,1) at observation " + std::to_string(i));
  }

  // Accumulate per-observation sums sum_i w_ij / den_i (and / (den_i p_i)),
  // indexed by the full-sample position j; arm members are extracted below.
  std::vector<double> acc(n, 0.0);
  std::vector<double> acc_ipw(with_ipw ? n : 0, 0.0);
  std::vector<double> inv_den(n);
  std::vector<double> inv_den_p(with_ipw ? n : 0);
  for (std::size_t i = 0; i < n; ++i) {
    inv_den[i] = 1.0 / den[i];
    if (with_ipw) inv_den_p[i] = 1.0 / (den[i] * arm_propensity[i]);
  }

  CovariateKernel kern(sample, spec);
  for (std::size_t a = 0; a < n; ++a) {
    const bool a_in = sample.d(a) == arm;
    for (std::size_t b = a; b < n; ++b) {
      const bool b_in = sample.d(b) == arm;
      if (!a_in && !b_in) continue;
      const double w = kern(a, b);
      if (b_in) {
        acc[b] += w * inv_den[a];
        if (with_ipw) acc_ipw[b] += w * inv_den_p[a];
      }
      if (a_in && b != a) {
        acc[a] += w * inv_den[b];
        if (with_ipw) acc_ipw[a] += w * inv_den_p[b];
      }
    }
  }

  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> outcomes;
  std::vector<double> weights;
  std::vector<double> ipw;
  for (std::size_t j = 0; j < n; ++j) {
    if (sample.d(j) != arm) continue;
    outcomes.push_back(sample.y(j));
    weights.push_back(acc[j] * inv_n);
    if (with_ipw) ipw.push_back(acc_ipw[j] * inv_n);
  }
  return ArmDensity(arm, spec, std::move(outcomes), std::move(weights), std::move(ipw));
}

DensityCurve marginal_density_curve(const Sample& sample, int arm, const KernelSpec& spec,
                                    std::span<const double> grid, int order) {
  validate_grid(grid);
  check_order(order);
  const auto den = covariate_denominators(sample, spec);
  return fit_arm_density(sample, arm, spec, den).curve(grid, order);
}

}  // namespace mte
