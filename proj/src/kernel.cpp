#include "mte/kernel.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace mte {

namespace {

constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double gaussian(double u, int order) {
  const double phi = kInvSqrt2Pi * std::exp(-0.5 * u * u);
  switch (order) {
    case 0: return phi;
    case 1: return -u * phi;
    default: return (u * u - 1.0) * phi;
  }
}

double epanechnikov(double u, int order) {
  if (std::abs(u) > 1.0) return 0.0;
  switch (order) {
    case 0: return 0.75 * (1.0 - u * u);
    case 1: return -1.5 * u;
    default: return -1.5;
  }
}

double simpson_step(const std::function<double(double)>& f, double a, double b, double fa,
                    double fm, double fb, double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

KernelConstants closed_form(KernelFamily family) {
  switch (family) {
    case KernelFamily::Gaussian:
      return {1.0 / (4.0 * std::sqrt(std::numbers::pi)), 1.0};
    case KernelFamily::Epanechnikov:
      return {1.5, 0.2};
  }
  throw std::invalid_argument("unknown kernel family");
}

}  // namespace

std::string_view to_string(KernelFamily family) {
  return family == KernelFamily::Gaussian ? "gaussian" : "epanechnikov";
}

KernelFamily parse_kernel_family(std::string_view name) {
  if (name == "gaussian") return KernelFamily::Gaussian;
  if (name == "epanechnikov") return KernelFamily::Epanechnikov;
  throw std::invalid_argument("unknown kernel family '" + std::string(name) + "'");
}

KernelSpec::KernelSpec(KernelFamily family, double h) : family_(family), h_(h) {
  if (!(h > 0.0) || !std::isfinite(h))
    throw std::invalid_argument("bandwidth must be positive and finite, got " + std::to_string(h));
}

double eval_kernel(KernelFamily family, double u, int order) {
  if (order < 0 || order > 2)
    throw std::invalid_argument("kernel derivative order must be 0, 1 or 2, got " +
                                std::to_string(order));
  return family == KernelFamily::Gaussian ? gaussian(u, order) : epanechnikov(u, order);
}

double scaled_kernel(const KernelSpec& spec, double diff, int order) {
  const double h = spec.h();
  return eval_kernel(spec.family(), diff / h, order) / std::pow(h, 1 + order);
}

double product_kernel(const KernelSpec& spec, std::span<const double> diff) {
  if (diff.empty()) throw std::invalid_argument("product kernel needs at least one coordinate");
  const double h = spec.h();
  double prod = 1.0;
  for (double v : diff) prod *= eval_kernel(spec.family(), v / h, 0);
  return prod / std::pow(h, static_cast<int>(diff.size()));
}

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double tol,
                        int max_depth) {
  const double fa = f(a);
  const double fb = f(b);
  const double fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return simpson_step(f, a, b, fa, fm, fb, whole, tol, max_depth);
}

KernelConstants kernel_constants_by_quadrature(KernelFamily family, double tol) {
  // Integrate each half separately so the Epanechnikov kinks at 0 and +-1
  // land on panel edges.
  const double edge = family == KernelFamily::Gaussian ? 12.0 : 1.0;
  auto integrate = [&](auto&& g) {
    const std::function<double(double)> fn = g;
    return adaptive_simpson(fn, -edge, 0.0, 0.5 * tol) + adaptive_simpson(fn, 0.0, edge, 0.5 * tol);
  };
  const double k01 = integrate([&](double u) {
    const double d = eval_kernel(family, u, 1);
    return d * d;
  });
  const double k2 = integrate([&](double u) { return u * u * eval_kernel(family, u, 0); });
  return {k01, k2};
}

const KernelConstants& kernel_constants(KernelFamily family) {
  static const KernelConstants gaussian_constants = closed_form(KernelFamily::Gaussian);
  static const KernelConstants epanechnikov_constants = closed_form(KernelFamily::Epanechnikov);
  return family == KernelFamily::Gaussian ? gaussian_constants : epanechnikov_constants;
}

BandwidthChoice default_bandwidth(long n, int d, BandwidthMethod method, double scale) {
  if (n < 2) throw std::invalid_argument("default bandwidth needs n >= 2");
  if (d < 0) throw std::invalid_argument("covariate dimension must be non-negative");
  if (!(scale > 0.0) || !std::isfinite(scale))
    throw std::invalid_argument("bandwidth scale must be positive and finite");
  double r = 0.2;
  bool warn = false;
  if (method == BandwidthMethod::KernelMTE) {
    if (d <= 1) {
      r = 13.0 / 84.0;
    } else {
      r = 1.0 / 7.0 + 0.01;
      warn = true;
    }
  }
  return {scale * std::pow(static_cast<double>(n), -r), r, warn};
}

}  // namespace mte
