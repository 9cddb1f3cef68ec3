#pragma once

namespace mte {

/// Standard normal quantile (Wichura's AS 241, PPND16; ~1e-16 relative).
double normal_quantile(double p);

/// Standard normal CDF.
double normal_cdf(double x);

}  // namespace mte
