#pragma once

#include <functional>
#include <span>
#include <string>
#include <string_view>

namespace mte {

enum class KernelFamily { Gaussian, Epanechnikov };

std::string_view to_string(KernelFamily family);
KernelFamily parse_kernel_family(std::string_view name);

/// Kernel family plus bandwidth. The bandwidth is shared by the outcome
/// kernel and every covariate coordinate.
class KernelSpec {
public:
  KernelSpec(KernelFamily family, double h);

  KernelFamily family() const noexcept { return family_; }
  double h() const noexcept { return h_; }

  friend bool operator==(const KernelSpec&, const KernelSpec&) = default;

private:
  KernelFamily family_;
  double h_;
};

struct KernelConstants {
  double kappa0_1;  // integral of K'(u)^2
  double kappa2;    // integral of u^2 K(u)
};

/// K^(order)(u) for order in {0,1,2}. Epanechnikov derivatives at |u| == 1
/// take the interior one-sided value.
double eval_kernel(KernelFamily family, double u, int order);

/// h^-(1+order) K^(order)(diff / h).
double scaled_kernel(const KernelSpec& spec, double diff, int order);

/// h^-d prod_j K(diff_j / h).
double product_kernel(const KernelSpec& spec, std::span<const double> diff);

/// Cached per family; safe to call concurrently.
const KernelConstants& kernel_constants(KernelFamily family);

/// Same constants obtained by adaptive Simpson quadrature over the support.
KernelConstants kernel_constants_by_quadrature(KernelFamily family, double tol = 1e-8);

/// Adaptive Simpson quadrature of f over [a, b] to absolute tolerance `tol`.
double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double tol, int max_depth = 50);

enum class BandwidthMethod { KernelMTE, DML };

struct BandwidthChoice {
  double h;
  double rate_exponent;
  /// Set for the kernel estimator with two or more covariates, where the
  /// first-order-kernel rate conditions cannot all hold.
  bool rate_warning;
};

/// scale * n^-r with r = 1/5 (DML), 13/84 (kernel, d <= 1) or 1/7 + 0.01
/// (kernel, d >= 2, flagged).
BandwidthChoice default_bandwidth(long n, int d, BandwidthMethod method, double scale);

}  // namespace mte
