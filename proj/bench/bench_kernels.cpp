// Serial vs parallel timing of the hot kernels, with a bitwise equality
// check between the two paths (the kernels are written so thread scheduling
// can never change results).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <vector>

#include "mfl/cloud.hpp"
#include "mfl/dynamics.hpp"
#include "mfl/functionals.hpp"
#include "mfl/kernels.hpp"

using namespace mfl;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double run_em(Exec policy, int n, int steps, ParticleCloud* out) {
  const CompositeExpectation F = CompositeExpectation::default_1d();
  const ConfiningPotential u{1.0};
  ParticleCloud c = sample_cloud(DistributionSpec::gaussian(1.0, 1.0), n, 42);
  std::vector<double> buf;
  const auto t0 = std::chrono::steady_clock::now();
  for (int s = 0; s < steps; ++s) em_step_interacting(c, F, u, 1.0, 1e-3, s, policy, buf);
  const double dt = seconds_since(t0);
  if (out) *out = c;
  return dt;
}

double run_pairwise(Exec policy, int n, int reps, std::vector<double>* out) {
  const PairwiseInteraction F(1, 1.0, 1.0);
  ParticleCloud c = sample_cloud(DistributionSpec::gaussian(0.0, 1.0), n, 7);
  std::vector<double> drift(n);
  const auto t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) F.dmf_batch(c.measure(), c.data(), n, drift.data(), policy);
  const double dt = seconds_since(t0);
  if (out) *out = drift;
  return dt;
}

double max_abs_diff(const double* a, const double* b, int n) {
  double m = 0.0;
  for (int i = 0; i < n; ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

int main() {
  std::printf("threads available: %d\n\n", max_threads());
  int bad = 0;

  {
    const int n = 4096, steps = 2000;
    ParticleCloud cs, cp;
    const double ts = run_em(Exec::serial, n, steps, &cs);
    const double tp = run_em(Exec::parallel, n, steps, &cp);
    const double diff = max_abs_diff(cs.data(), cp.data(), n);
    std::printf("em_step_interacting (composite, n=%d, %d steps)\n", n, steps);
    std::printf("  serial   %8.3f s\n  parallel %8.3f s   speedup %.2fx\n", ts, tp, ts / tp);
    std::printf("  max |serial - parallel| = %.17g %s\n\n", diff, diff == 0.0 ? "(bit-identical)" : "(MISMATCH)");
    if (diff != 0.0) ++bad;
  }
  {
    const int n = 2048, reps = 50;
    std::vector<double> ds, dp;
    const double ts = run_pairwise(Exec::serial, n, reps, &ds);
    const double tp = run_pairwise(Exec::parallel, n, reps, &dp);
    const double diff = max_abs_diff(ds.data(), dp.data(), n);
    std::printf("dmf_batch (pairwise kernel, n=%d, %d evaluations)\n", n, reps);
    std::printf("  serial   %8.3f s\n  parallel %8.3f s   speedup %.2fx\n", ts, tp, ts / tp);
    std::printf("  max |serial - parallel| = %.17g %s\n", diff, diff == 0.0 ? "(bit-identical)" : "(MISMATCH)");
    if (diff != 0.0) ++bad;
  }
  return bad;
}
