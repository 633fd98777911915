#pragma once
// Lightweight non-owning view of a discrete probability measure: weighted
// support points in R^d. Particle clouds map to uniform weights (optionally
// with one row left out), grid densities map to cell centers weighted by
// density*h. Functionals integrate against this one type.

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mfl {

struct MeasureRef {
  const double* pts = nullptr;  // rows x d, row-major
  const double* wts = nullptr;  // nullptr => uniform over kept rows
  int rows = 0;
  int d = 0;
  int skip = -1;  // row excluded from a uniform measure (leave-one-out)

  int kept() const { return skip >= 0 ? rows - 1 : rows; }
  const double* point(int i) const { return pts + static_cast<size_t>(i) * d; }
  double weight(int i) const { return wts ? wts[i] : 1.0 / kept(); }
  bool skipped(int i) const { return i == skip; }
};

// Integrate a scalar function over the measure: sum_i w_i f(x_i).
template <class F>
double integrate(const MeasureRef& m, F&& f) {
  double acc = 0.0;
  for (int i = 0; i < m.rows; ++i) {
    if (m.skipped(i)) continue;
    acc += m.weight(i) * f(m.point(i));
  }
  return acc;
}

inline void require_dim(const MeasureRef& m, int d, const char* who) {
  if (m.d != d) throw std::invalid_argument(std::string(who) + ": measure dimension mismatch");
}

}  // namespace mfl
