#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mte/kernel.hpp"

namespace mte {

/// Observed triples (Y_i, D_i, X_i). Covariates are stored row-major.
class Sample {
public:
  Sample() = default;
  Sample(std::vector<double> y, std::vector<int> d, std::vector<double> x, std::size_t dim);

  std::size_t size() const noexcept { return y_.size(); }
  std::size_t dim() const noexcept { return dim_; }

  double y(std::size_t i) const { return y_[i]; }
  int d(std::size_t i) const { return d_[i]; }
  std::span<const double> x(std::size_t i) const { return {x_.data() + i * dim_, dim_}; }

  const std::vector<double>& outcomes() const noexcept { return y_; }
  const std::vector<int>& treatments() const noexcept { return d_; }
  const std::vector<double>& covariates() const noexcept { return x_; }

  std::size_t count_arm(int arm) const;
  /// Throws EmptyArmError when `arm` has no observations.
  void require_arm(int arm) const;
  void require_both_arms() const;

  /// Copy restricted to the given observation indices, in the given order.
  Sample subset(std::span<const std::size_t> indices) const;
  /// Copy with every treatment indicator flipped.
  Sample swapped_arms() const;

  friend bool operator==(const Sample&, const Sample&) = default;

private:
  std::vector<double> y_;
  std::vector<int> d_;
  std::vector<double> x_;
  std::size_t dim_ = 0;
};

/// An estimated density (or derivative) on a strictly increasing y-grid.
struct DensityCurve {
  std::vector<double> grid;
  std::vector<double> values;
  int arm = 1;
  int order = 0;
  KernelSpec spec{KernelFamily::Gaussian, 1.0};
};

/// Throws std::invalid_argument unless the grid is strictly increasing with
/// at least three points.
void validate_grid(std::span<const double> grid);

/// `points` equally spaced values spanning [min(y) - pad, max(y) + pad].
std::vector<double> default_grid(std::span<const double> y, double pad, std::size_t points = 512);

/// Trapezoid integral of a curve over its grid.
double trapezoid(std::span<const double> grid, std::span<const double> values);

double sample_mean(std::span<const double> v);
/// Standard deviation with the (n - 1) convention.
double sample_sd(std::span<const double> v);
/// Linear-interpolation quantile (Hyndman-Fan type 7).
double quantile(std::span<const double> v, double p);
/// min(sd, IQR / 1.349), falling back to whichever is positive.
double robust_scale(std::span<const double> v);

}  // namespace mte
