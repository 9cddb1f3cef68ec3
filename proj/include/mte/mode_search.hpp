#pragma once

#include <cstddef>
#include <functional>

#include "mte/sample.hpp"

namespace mte {

struct GridMax {
  std::size_t index;
  double value;
  /// Every value equal: the curve carries no mode information.
  bool flat;
  /// More than one strict interior local maximum.
  bool multimodal;
};

/// Index of the largest value, ties going to the smallest y.
GridMax argmax_on_grid(const DensityCurve& curve);

/// Vertex of the parabola through (y0 - window, y0, y0 + window), clamped to
/// [y0 - window, y0 + window]; y0 itself when the parabola is not concave.
double refine_mode(const std::function<double(double)>& evaluate, double y0, double window);

struct ModeLocation {
  double theta;
  std::size_t grid_index;
  bool refined;
  /// Order-1 density at theta (0 when no derivative evaluator was given).
  double foc_residual;
  bool flat_curve;
  bool multimodal;
};

/// Grid argmax followed by one-cell quadratic refinement. `derivative`, when
/// set, evaluates the order-1 curve for the first-order-condition residual.
ModeLocation mode_of_curve(const DensityCurve& curve, const std::function<double(double)>& evaluate,
                           const std::function<double(double)>& derivative = {});

}  // namespace mte
