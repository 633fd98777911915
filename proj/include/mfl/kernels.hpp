#pragma once
// Execution policy shared by the data-parallel kernels. Every parallel loop
// writes disjoint slots and every reduction is serialized over a buffer, so
// serial and parallel runs of the same kernel are bit-identical; tests and
// the benchmark target hold the two paths against each other.

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mfl {

enum class Exec { serial, parallel };

// Run body(i) for i in [0, n). Parallel path uses OpenMP when available.
template <class Body>
void parallel_for(Exec policy, int n, Body&& body) {
  if (policy == Exec::parallel) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) body(i);
    return;
#endif
  }
  for (int i = 0; i < n; ++i) body(i);
}

inline int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

inline void set_threads(int k) {
#ifdef _OPENMP
  if (k > 0) omp_set_num_threads(k);
#else
  (void)k;
#endif
}

}  // namespace mfl
