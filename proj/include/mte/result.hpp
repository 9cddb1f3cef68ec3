#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "mte/kernel.hpp"

namespace mte {

enum class Method { Kernel, DML };

std::string_view to_string(Method method);
Method parse_method(std::string_view name);

struct Interval {
  double low = 0.0;
  double high = 0.0;

  friend bool operator==(const Interval&, const Interval&) = default;
};

/// M-hat (mean curvature at the mode) and V-hat (score variance) per arm.
struct VarianceComponents {
  double m1 = 0.0;
  double m0 = 0.0;
  double v1 = 0.0;
  double v0 = 0.0;

  friend bool operator==(const VarianceComponents&, const VarianceComponents&) = default;
};

struct Diagnostics {
  bool flat_curve = false;
  bool multimodal = false;
  /// m1_hat or m0_hat is non-negative: no genuine interior maximum.
  bool m_hat_nonnegative = false;
  int fold_reseeds = 0;
  bool bandwidth_rate_warning = false;
  double foc_residual1 = 0.0;
  double foc_residual0 = 0.0;
  std::vector<std::string> warnings;

  friend bool operator==(const Diagnostics&, const Diagnostics&) = default;
};

struct MTEResult {
  Method method = Method::Kernel;
  KernelFamily family = KernelFamily::Gaussian;
  std::size_t n = 0;
  double h = 0.0;
  int folds = 0;  // DML only
  double alpha = 0.05;

  double theta1 = 0.0;
  double theta0 = 0.0;
  double delta = 0.0;
  VarianceComponents components;
  double se1 = 0.0;
  double se0 = 0.0;
  double se_delta = 0.0;
  Interval ci1;
  Interval ci0;
  Interval ci_delta;
  Diagnostics diagnostics;

  /// Order-0 curves the modes were read from (shared grid).
  std::vector<double> grid;
  std::vector<double> curve1;
  std::vector<double> curve0;

  friend bool operator==(const MTEResult&, const MTEResult&) = default;
};

/// Fills delta, standard errors and intervals from thetas and variance
/// components: se_arm = sqrt(V / (M^2 n h^3)), se_delta^2 = se1^2 + se0^2.
void finalize_inference(MTEResult& result);

}  // namespace mte
