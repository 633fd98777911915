#pragma once
// Least-squares fitting helpers for the measured decay curves: log-log power
// laws with bootstrap confidence bands, exponential-plus-floor relaxation
// fits, and isotonic regression for monotonicity checks.

#include <cstdint>
#include <vector>

namespace mfl {

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};
// Ordinary least squares y ~ intercept + slope * x.
LinearFit fit_linear(const std::vector<double>& x, const std::vector<double>& y);

struct PowerlawFit {
  double slope = 0.0;      // log y = intercept + slope * log x
  double intercept = 0.0;
  double r2 = 0.0;         // in log-log space
  double slope_lo = 0.0;   // bootstrap percentile 2.5%
  double slope_hi = 0.0;   // bootstrap percentile 97.5%
  int resamples = 0;
};
// Requires positive x and y with at least two distinct x. Bootstrap resamples
// whole points.
PowerlawFit fit_powerlaw(const std::vector<double>& x, const std::vector<double>& y, int resamples = 200,
                         uint64_t seed = 0x626f6f74);

struct ExpFloorFit {
  double amplitude = 0.0;  // y ~ amplitude * exp(-rate * t) + floor
  double rate = 0.0;
  double floor = 0.0;
  double r2 = 0.0;         // of the log-space linear fit at the chosen floor
};
// Golden-section search over the floor, inner linear fit of log(y - floor).
ExpFloorFit fit_exp_plus_floor(const std::vector<double>& t, const std::vector<double>& y);

// Pool-adjacent-violators projection onto non-increasing sequences.
std::vector<double> isotonic_decreasing(const std::vector<double>& y);

// 1 - SSE/SST of fitted against observed.
double r_squared(const std::vector<double>& y, const std::vector<double>& fitted);

}  // namespace mfl
