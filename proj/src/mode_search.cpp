#include "mte/mode_search.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mte/errors.hpp"

namespace mte {

GridMax argmax_on_grid(const DensityCurve& curve) {
  if (curve.order != 0) throw std::invalid_argument("mode search needs an order-0 curve");
  if (curve.values.size() < 3 || curve.values.size() != curve.grid.size())
    throw std::invalid_argument("mode search needs at least 3 grid points");
  const auto& v = curve.values;
  for (double x : v)
    if (!std::isfinite(x)) throw InvalidCurveError("density curve contains non-finite values");

  std::size_t best = 0;
  for (std::size_t j = 1; j < v.size(); ++j)
    if (v[j] > v[best]) best = j;

  const bool flat = std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
  int peaks = 0;
  for (std::size_t j = 1; j + 1 < v.size(); ++j) {
    // Plateau-aware: a run of equal values counts once if it rises and then falls.
    if (!(v[j] > v[j - 1])) continue;
    std::size_t k = j;
    while (k + 1 < v.size() && v[k + 1] == v[j]) ++k;
    if (k + 1 < v.size() && v[k + 1] < v[j]) ++peaks;
  }
  return {best, v[best], flat, peaks > 1};
}

double refine_mode(const std::function<double(double)>& evaluate, double y0, double window) {
  if (!(window > 0.0)) return y0;
  const double lo = evaluate(y0 - window);
  const double mid = evaluate(y0);
  const double hi = evaluate(y0 + window);
  const double curvature = lo - 2.0 * mid + hi;
  if (!(curvature < 0.0) || !std::isfinite(curvature)) return y0;
  const double vertex = y0 + 0.5 * window * (lo - hi) / curvature;
  return std::clamp(vertex, y0 - window, y0 + window);
}

ModeLocation mode_of_curve(const DensityCurve& curve, const std::function<double(double)>& evaluate,
                           const std::function<double(double)>& derivative) {
  const GridMax gm = argmax_on_grid(curve);
  const auto& grid = curve.grid;
  const std::size_t i = gm.index;
  // One grid spacing, taken on the side that stays inside the grid at the ends.
  const double window = i + 1 < grid.size() ? grid[i + 1] - grid[i] : grid[i] - grid[i - 1];

  ModeLocation loc{grid[i], i, false, 0.0, gm.flat, gm.multimodal};
  if (evaluate && !gm.flat) {
    const double refined = refine_mode(evaluate, grid[i], window);
    loc.theta = std::clamp(refined, grid.front(), grid.back());
    loc.refined = true;
  }
  if (derivative) loc.foc_residual = derivative(loc.theta);
  return loc;
}

}  // namespace mte
