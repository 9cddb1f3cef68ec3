#include "mte/kernel_mte.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "mte/conditional_density.hpp"
#include "mte/errors.hpp"
#include "mte/mode_search.hpp"
#include "mte/normal.hpp"
#include "mte/nuisance.hpp"

namespace mte {

std::string_view to_string(Method method) { return method == Method::Kernel ? "kernel" : "dml"; }

Method parse_method(std::string_view name) {
  if (name == "kernel") return Method::Kernel;
  if (name == "dml") return Method::DML;
  throw std::invalid_argument("unknown method '" + std::string(name) + "'");
}

void finalize_inference(MTEResult& r) {
  if (!(r.alpha > 0.0 && r.alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  const double nh3 = static_cast<double>(r.n) * r.h * r.h * r.h;
  auto se_of = [&](double m, double v) { return std::sqrt(v / (m * m * nh3)); };
  r.delta = r.theta1 - r.theta0;
  r.se1 = se_of(r.components.m1, r.components.v1);
  r.se0 = se_of(r.components.m0, r.components.v0);
  r.se_delta = std::sqrt(r.se1 * r.se1 + r.se0 * r.se0);
  const double z = normal_quantile(1.0 - 0.5 * r.alpha);
  r.ci1 = {r.theta1 - z * r.se1, r.theta1 + z * r.se1};
  r.ci0 = {r.theta0 - z * r.se0, r.theta0 + z * r.se0};
  r.ci_delta = {r.delta - z * r.se_delta, r.delta + z * r.se_delta};
  if (r.components.m1 >= 0.0 || r.components.m0 >= 0.0) {
    r.diagnostics.m_hat_nonnegative = true;
    r.diagnostics.warnings.push_back("non-negative curvature at an estimated mode");
  }
}

std::pair<Sample, Standardization> standardize_covariates(const Sample& sample) {
  const std::size_t n = sample.size();
  const std::size_t dim = sample.dim();
  Standardization rec{std::vector<double>(dim), std::vector<double>(dim)};
  std::vector<double> x = sample.covariates();
  std::vector<double> column(n);
  for (std::size_t k = 0; k < dim; ++k) {
    for (std::size_t i = 0; i < n; ++i) column[i] = x[i * dim + k];
    const double sd = n >= 2 ? sample_sd(column) : 0.0;
    if (!(sd > 0.0))
      throw ConstantCovariateError(k, "covariate column " + std::to_string(k) +
                                          " has zero variance");
    const double mean = sample_mean(column);
    rec.location[k] = mean;
    rec.scale[k] = sd;
    for (std::size_t i = 0; i < n; ++i) x[i * dim + k] = (column[i] - mean) / sd;
  }
  return {Sample(sample.outcomes(), sample.treatments(), std::move(x), dim), std::move(rec)};
}

BandwidthChoice auto_bandwidth(const Sample& sample, BandwidthMethod method) {
  return default_bandwidth(static_cast<long>(sample.size()), static_cast<int>(sample.dim()),
                           method, robust_scale(sample.outcomes()));
}

namespace {

struct ArmPropensities {
  std::vector<double> arm1;
  std::vector<double> arm0;
};

ArmPropensities propensities_for(const Sample& sample, const CovariateDenominators& den,
                                 const PropensityFunction& pi_hat, double kappa) {
  const std::size_t n = sample.size();
  ArmPropensities p{std::vector<double>(n), std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    if (pi_hat) {
      const double pi = clip_propensity(pi_hat(sample.x(i)), kappa);
      p.arm1[i] = pi;
      p.arm0[i] = 1.0 - pi;
    } else {
      // Written symmetrically so flipping D swaps the two vectors exactly.
      const double total = den.arm1[i] + den.arm0[i];
      p.arm1[i] = clip_propensity(den.arm1[i] / total, kappa);
      p.arm0[i] = clip_propensity(den.arm0[i] / total, kappa);
    }
  }
  return p;
}

}  // namespace

VarianceComponents kernel_variance_components(const Sample& sample, const KernelSpec& spec,
                                              double theta1, double theta0,
                                              const PropensityFunction& pi_hat, double kappa) {
  sample.require_both_arms();
  const auto den = covariate_denominators(sample, spec);
  const auto p = propensities_for(sample, den, pi_hat, kappa);
  const auto f1 = fit_arm_density(sample, 1, spec, den, p.arm1);
  const auto f0 = fit_arm_density(sample, 0, spec, den, p.arm0);
  const double k01 = kernel_constants(spec.family()).kappa0_1;
  return {f1.at(theta1, 2), f0.at(theta0, 2), k01 * f1.ipw_at(theta1, 0),
          k01 * f0.ipw_at(theta0, 0)};
}

MTEResult estimate_kernel_mte(const Sample& raw, const KernelMteOptions& options) {
  raw.require_both_arms();
  if (raw.dim() == 0) throw std::invalid_argument("the kernel estimator needs covariates");
  const Sample sample = standardize_covariates(raw).first;

  MTEResult r;
  r.method = Method::Kernel;
  r.family = options.family;
  r.n = sample.size();
  r.alpha = options.alpha;

  if (options.bandwidth) {
    r.h = *options.bandwidth;
  } else {
    const auto bw = auto_bandwidth(sample, BandwidthMethod::KernelMTE);
    r.h = bw.h;
    if (bw.rate_warning) {
      r.diagnostics.bandwidth_rate_warning = true;
      r.diagnostics.warnings.push_back(
          "kernel estimator with d >= 2: first-order kernel rate conditions cannot all hold");
    }
  }
  const KernelSpec spec(options.family, r.h);
  r.grid = options.grid ? *options.grid
                        : default_grid(sample.outcomes(), r.h, options.grid_points);
  validate_grid(r.grid);

  const auto den = covariate_denominators(sample, spec);
  const auto p = propensities_for(sample, den, options.propensity, options.kappa);
  const auto f1 = fit_arm_density(sample, 1, spec, den, p.arm1);
  const auto f0 = fit_arm_density(sample, 0, spec, den, p.arm0);

  const auto c1 = f1.curve(r.grid, 0);
  const auto c0 = f0.curve(r.grid, 0);
  const auto m1 = mode_of_curve(
      c1, [&](double y) { return f1.at(y, 0); }, [&](double y) { return f1.at(y, 1); });
  const auto m0 = mode_of_curve(
      c0, [&](double y) { return f0.at(y, 0); }, [&](double y) { return f0.at(y, 1); });

  r.theta1 = m1.theta;
  r.theta0 = m0.theta;
  r.diagnostics.flat_curve = m1.flat_curve || m0.flat_curve;
  r.diagnostics.multimodal = m1.multimodal || m0.multimodal;
  r.diagnostics.foc_residual1 = m1.foc_residual;
  r.diagnostics.foc_residual0 = m0.foc_residual;
  if (r.diagnostics.flat_curve) r.diagnostics.warnings.push_back("flat density curve");
  if (r.diagnostics.multimodal) r.diagnostics.warnings.push_back("multi-modal density curve");

  const double k01 = kernel_constants(spec.family()).kappa0_1;
  r.components = {f1.at(r.theta1, 2), f0.at(r.theta0, 2), k01 * f1.ipw_at(r.theta1, 0),
                  k01 * f0.ipw_at(r.theta0, 0)};
  finalize_inference(r);

  if (options.keep_curves) {
    r.curve1 = c1.values;
    r.curve0 = c0.values;
  } else {
    r.grid.clear();
  }
  return r;
}

}  // namespace mte
