#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "mte/kernel.hpp"
#include "mte/result.hpp"
#include "mte/sample.hpp"

namespace mte {

struct Standardization {
  std::vector<double> location;
  std::vector<double> scale;
};

/// Centers each covariate column and scales it to unit (n - 1) standard
/// deviation. Outcomes are left untouched.
std::pair<Sample, Standardization> standardize_covariates(const Sample& sample);

/// x -> P(D = 1 | X = x), before clipping.
using PropensityFunction = std::function<double(std::span<const double>)>;

/// Plug-in M-hat / V-hat of the kernel estimator at (theta1, theta0).
/// Without `pi_hat`, the propensity is the Nadaraya-Watson regression of D on
/// X with the same product kernel. Propensities are clipped to
/// [kappa, 1 - kappa]; V0 divides by 1 - pi.
VarianceComponents kernel_variance_components(const Sample& sample, const KernelSpec& spec,
                                              double theta1, double theta0,
                                              const PropensityFunction& pi_hat = {},
                                              double kappa = 0.01);

struct KernelMteOptions {
  KernelFamily family = KernelFamily::Gaussian;
  /// Automatic rule when empty.
  std::optional<double> bandwidth;
  /// Automatic [min Y - h, max Y + h] grid when empty.
  std::optional<std::vector<double>> grid;
  std::size_t grid_points = 512;
  double alpha = 0.05;
  double kappa = 0.01;
  /// Evaluated on standardized covariates.
  PropensityFunction propensity;
  bool keep_curves = false;
};

MTEResult estimate_kernel_mte(const Sample& sample, const KernelMteOptions& options = {});

/// Bandwidth used when none is given: default_bandwidth with
/// scale = min(sd(Y), IQR(Y) / 1.349).
BandwidthChoice auto_bandwidth(const Sample& sample, BandwidthMethod method);

}  // namespace mte
