#include "mfl/fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "mfl/rng.hpp"

namespace mfl {

LinearFit fit_linear(const std::vector<double>& x, const std::vector<double>& y) {
  const size_t n = x.size();
  if (n != y.size() || n < 2) throw std::invalid_argument("linear fit: need >= 2 paired points");
  double sx = 0, sy = 0;
  for (size_t i = 0; i < n; ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0;
  for (size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx <= 0.0) throw std::invalid_argument("linear fit: degenerate data (zero variance in x)");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  std::vector<double> fitted(n);
  for (size_t i = 0; i < n; ++i) fitted[i] = f.intercept + f.slope * x[i];
  f.r2 = r_squared(y, fitted);
  return f;
}

PowerlawFit fit_powerlaw(const std::vector<double>& x, const std::vector<double>& y, int resamples,
                         uint64_t seed) {
  const size_t n = x.size();
  if (n != y.size() || n < 2) throw std::invalid_argument("powerlaw fit: need >= 2 paired points");
  std::vector<double> lx(n), ly(n);
  for (size_t i = 0; i < n; ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw std::invalid_argument("powerlaw fit: needs positive data");
    lx[i] = std::log(x[i]);
    ly[i] = std::log(y[i]);
  }
  const LinearFit base = fit_linear(lx, ly);
  PowerlawFit f;
  f.slope = base.slope;
  f.intercept = base.intercept;
  f.r2 = base.r2;
  f.slope_lo = f.slope_hi = base.slope;
  f.resamples = 0;

  if (resamples > 0) {
    const CounterRng rng(seed, Stream::scratch, 0);
    std::vector<double> slopes;
    slopes.reserve(resamples);
    std::vector<double> bx(n), by(n);
    uint64_t ctr = 0;
    for (int b = 0; b < resamples; ++b) {
      for (size_t i = 0; i < n; ++i) {
        const size_t j = static_cast<size_t>(rng.below(ctr++, n));
        bx[i] = lx[j];
        by[i] = ly[j];
      }
      const double mn = *std::min_element(bx.begin(), bx.end());
      const double mx = *std::max_element(bx.begin(), bx.end());
      if (mx - mn <= 0.0) continue;  // degenerate resample, skip
      slopes.push_back(fit_linear(bx, by).slope);
    }
    if (!slopes.empty()) {
      std::sort(slopes.begin(), slopes.end());
      const size_t k = slopes.size();
      f.slope_lo = slopes[static_cast<size_t>(0.025 * (k - 1))];
      f.slope_hi = slopes[static_cast<size_t>(0.975 * (k - 1))];
      f.resamples = static_cast<int>(k);
    }
  }
  return f;
}

namespace {

// SSE of the log-space linear fit of log(y - c) against t; +inf when invalid.
double floor_objective(const std::vector<double>& t, const std::vector<double>& y, double c,
                       LinearFit* out = nullptr) {
  const size_t n = t.size();
  std::vector<double> ly(n);
  for (size_t i = 0; i < n; ++i) {
    const double r = y[i] - c;
    if (!(r > 0.0)) return std::numeric_limits<double>::infinity();
    ly[i] = std::log(r);
  }
  const LinearFit f = fit_linear(t, ly);
  double sse = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double e = ly[i] - (f.intercept + f.slope * t[i]);
    sse += e * e;
  }
  if (out) *out = f;
  return sse;
}

}  // namespace

ExpFloorFit fit_exp_plus_floor(const std::vector<double>& t, const std::vector<double>& y) {
  const size_t n = t.size();
  if (n != y.size() || n < 4) throw std::invalid_argument("exp fit: need >= 4 paired points");
  const double ymin = *std::min_element(y.begin(), y.end());
  if (!(ymin > 0.0)) throw std::invalid_argument("exp fit: needs positive data");

  double lo = 0.0, hi = ymin * (1.0 - 1e-9);
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
  double f1 = floor_objective(t, y, x1), f2 = floor_objective(t, y, x2);
  for (int it = 0; it < 200; ++it) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - gr * (b - a);
      f1 = floor_objective(t, y, x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + gr * (b - a);
      f2 = floor_objective(t, y, x2);
    }
  }
  double best_c = (f1 <= f2) ? x1 : x2;
  // a floor this far below the data cannot move any log(y - c)
  if (best_c <= 1e-9 * ymin) best_c = 0.0;
  // the zero floor is often exactly right; keep it when it is no worse
  LinearFit at_c, at_zero;
  const double sse_c = floor_objective(t, y, best_c, &at_c);
  const double sse_zero = floor_objective(t, y, 0.0, &at_zero);
  ExpFloorFit f;
  if (sse_zero <= sse_c) {
    best_c = 0.0;
    at_c = at_zero;
  }
  f.floor = best_c;
  f.rate = -at_c.slope;
  f.amplitude = std::exp(at_c.intercept);
  f.r2 = at_c.r2;
  return f;
}

std::vector<double> isotonic_decreasing(const std::vector<double>& y) {
  // PAV on the negated sequence gives the non-decreasing projection.
  const size_t n = y.size();
  std::vector<double> level;
  std::vector<size_t> count;
  level.reserve(n);
  count.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    double v = -y[i];
    size_t c = 1;
    while (!level.empty() && level.back() >= v) {
      v = (level.back() * count.back() + v * c) / (count.back() + c);
      c += count.back();
      level.pop_back();
      count.pop_back();
    }
    level.push_back(v);
    count.push_back(c);
  }
  std::vector<double> out;
  out.reserve(n);
  for (size_t b = 0; b < level.size(); ++b)
    for (size_t r = 0; r < count[b]; ++r) out.push_back(-level[b]);
  return out;
}

double r_squared(const std::vector<double>& y, const std::vector<double>& fitted) {
  if (y.size() != fitted.size() || y.empty()) throw std::invalid_argument("r2: size mismatch");
  double my = 0.0;
  for (double v : y) my += v;
  my /= y.size();
  double sse = 0.0, sst = 0.0;
  for (size_t i = 0; i < y.size(); ++i) {
    sse += (y[i] - fitted[i]) * (y[i] - fitted[i]);
    sst += (y[i] - my) * (y[i] - my);
  }
  if (sst <= 0.0) return sse <= 0.0 ? 1.0 : 0.0;
  return 1.0 - sse / sst;
}

}  // namespace mfl
