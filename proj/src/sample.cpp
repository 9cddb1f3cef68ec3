#include "mte/sample.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "mte/errors.hpp"

namespace mte {

Sample::Sample(std::vector<double> y, std::vector<int> d, std::vector<double> x, std::size_t dim)
    : y_(std::move(y)), d_(std::move(d)), x_(std::move(x)), dim_(dim) {
  const std::size_t n = y_.size();
  if (n == 0) throw std::invalid_argument("sample must contain at least one observation");
  if (d_.size() != n) throw std::invalid_argument("treatment and outcome lengths differ");
  if (x_.size() != n * dim_)
    throw std::invalid_argument("covariate matrix has " + std::to_string(x_.size()) +
                                " entries, expected " + std::to_string(n * dim_));
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(y_[i]))
      throw std::invalid_argument("non-finite outcome at observation " + std::to_string(i));
    if (d_[i] != 0 && d_[i] != 1)
      throw std::invalid_argument("treatment must be 0 or 1 at observation " + std::to_string(i));
  }
  for (std::size_t k = 0; k < x_.size(); ++k) {
    if (!std::isfinite(x_[k]))
      throw std::invalid_argument("non-finite covariate at observation " +
                                  std::to_string(k / std::max<std::size_t>(dim_, 1)));
  }
}

std::size_t Sample::count_arm(int arm) const {
  return static_cast<std::size_t>(std::count(d_.begin(), d_.end(), arm));
}

void Sample::require_arm(int arm) const {
  if (count_arm(arm) == 0)
    throw EmptyArmError("no observations with d=" + std::to_string(arm));
}

void Sample::require_both_arms() const {
  require_arm(1);
  require_arm(0);
}

Sample Sample::subset(std::span<const std::size_t> indices) const {
  Sample out;
  out.dim_ = dim_;
  out.y_.reserve(indices.size());
  out.d_.reserve(indices.size());
  out.x_.reserve(indices.size() * dim_);
  for (std::size_t i : indices) {
    out.y_.push_back(y_.at(i));
    out.d_.push_back(d_[i]);
    auto row = x(i);
    out.x_.insert(out.x_.end(), row.begin(), row.end());
  }
  return out;
}

Sample Sample::swapped_arms() const {
  Sample out = *this;
  for (int& v : out.d_) v = 1 - v;
  return out;
}

void validate_grid(std::span<const double> grid) {
  if (grid.size() < 3) throw std::invalid_argument("grid needs at least 3 points");
  for (std::size_t j = 0; j < grid.size(); ++j) {
    if (!std::isfinite(grid[j])) throw std::invalid_argument("grid contains a non-finite value");
    if (j > 0 && !(grid[j] > grid[j - 1]))
      throw std::invalid_argument("grid must be strictly increasing");
  }
}

std::vector<double> default_grid(std::span<const double> y, double pad, std::size_t points) {
  if (y.empty()) throw std::invalid_argument("cannot build a grid from no outcomes");
  if (points < 3) throw std::invalid_argument("grid needs at least 3 points");
  const auto [lo_it, hi_it] = std::minmax_element(y.begin(), y.end());
  const double lo = *lo_it - pad;
  const double hi = *hi_it + pad;
  if (!(hi > lo)) throw std::invalid_argument("degenerate grid range");
  std::vector<double> grid(points);
  const double step = (hi - lo) / static_cast<double>(points - 1);
  for (std::size_t j = 0; j < points; ++j) grid[j] = lo + step * static_cast<double>(j);
  grid.back() = hi;
  return grid;
}

double trapezoid(std::span<const double> grid, std::span<const double> values) {
  if (grid.size() != values.size()) throw std::invalid_argument("grid/value length mismatch");
  double total = 0.0;
  for (std::size_t j = 1; j < grid.size(); ++j)
    total += 0.5 * (grid[j] - grid[j - 1]) * (values[j] + values[j - 1]);
  return total;
}

double sample_mean(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("mean of empty range");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_sd(std::span<const double> v) {
  if (v.size() < 2) throw std::invalid_argument("standard deviation needs at least 2 values");
  const double m = sample_mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double quantile(std::span<const double> v, double p) {
  if (v.empty()) throw std::invalid_argument("quantile of empty range");
  std::vector<double> s(v.begin(), v.end());
  std::sort(s.begin(), s.end());
  const double pos = p * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, s.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return s[lo] + frac * (s[hi] - s[lo]);
}

double robust_scale(std::span<const double> v) {
  const double sd = sample_sd(v);
  const double iqr = (quantile(v, 0.75) - quantile(v, 0.25)) / 1.349;
  if (sd > 0.0 && iqr > 0.0) return std::min(sd, iqr);
  if (sd > 0.0) return sd;
  throw std::invalid_argument("outcome has zero dispersion; cannot choose a bandwidth");
}

}  // namespace mte
