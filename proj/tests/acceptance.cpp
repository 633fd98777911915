// Acceptance gate: twelve property checks with pinned tolerances, one
// [PASS]/[FAIL] line each; the exit code is the number of failures.

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <numeric>
#include <string>
#include <vector>

#include "mfl/assignment.hpp"
#include "mfl/cloud.hpp"
#include "mfl/config.hpp"
#include "mfl/dynamics.hpp"
#include "mfl/experiment.hpp"
#include "mfl/fit.hpp"
#include "mfl/functionals.hpp"
#include "mfl/grid1d.hpp"
#include "mfl/kernels.hpp"
#include "mfl/metrics.hpp"
#include "mfl/rng.hpp"

using namespace mfl;

namespace {

int failures = 0;

void line(int idx, bool pass, const char* fmt, ...) {
  char buf[1024];
  va_list ap;
  va_start(ap, fmt);
  std::vsnprintf(buf, sizeof(buf), fmt, ap);
  va_end(ap);
  std::printf("[%s] criterion %2d: %s\n", pass ? "PASS" : "FAIL", idx, buf);
  std::fflush(stdout);
  if (!pass) ++failures;
}

bool in_band(double slope, double center, double halfwidth) {
  return slope >= center - halfwidth && slope <= center + halfwidth;
}

struct SweepSummaryChecks {
  bool gap_band = false;
  bool uit = false;
  bool value_band = false;
  bool decay_rate_positive = false;
  bool mismatch_band = false;
  bool entropy_monotone = false;
  double worst_uit_ratio = 0.0;
  double worst_entropy_excess = 0.0;
};

SweepSummaryChecks check_sweep(const PocSweepReport& rep) {
  SweepSummaryChecks c;
  c.gap_band = rep.gap_fit_ok && in_band(rep.gap_fit.slope, -1.0, 0.35);
  c.value_band = rep.value_fit_ok && in_band(rep.value_fit.slope, -1.0, 0.35);
  c.mismatch_band = rep.mismatch_fit_ok && in_band(rep.mismatch_fit.slope, -1.0, 0.35);
  c.decay_rate_positive = rep.value_decay_ok && rep.value_decay.rate > 0.0;

  c.uit = true;
  for (size_t i = 0; i < rep.n_list.size(); ++i) {
    if (!(rep.gap_early[i] > 0.0)) {
      c.uit = false;
      continue;
    }
    const double ratio = rep.gap_late[i] / rep.gap_early[i];
    c.worst_uit_ratio = std::max(c.worst_uit_ratio, ratio);
    if (ratio > 2.0) c.uit = false;
  }

  c.entropy_monotone = true;
  for (size_t i = 0; i + 1 < rep.n_list.size(); ++i) {
    const double rise = rep.entropy1[i + 1] - rep.entropy1[i];
    const double slack = 1.96 * (rep.entropy1_se[i] + rep.entropy1_se[i + 1]);
    c.worst_entropy_excess = std::max(c.worst_entropy_excess, rise - slack);
    if (rise > slack) c.entropy_monotone = false;
  }
  return c;
}

}  // namespace

int main() {
  set_threads(0);
  const ExperimentConfig cfg;  // defaults mirror configs/default.json
  ConfiningPotential u;
  u.curvature = cfg.curvature;
  const CompositeExpectation composite =
      CompositeExpectation::default_1d(cfg.functional.g_scale, cfg.functional.target);

  // ---- 1: derivative consistency across the three functional families ----
  {
    const PairwiseInteraction pairwise(2, 1.0, 1.0);
    const TwoLayerNetLoss two_layer = TwoLayerNetLoss::default_task();
    double worst = 0.0;
    bool pass = true;
    for (const MeanFieldFunctional* F :
         std::initializer_list<const MeanFieldFunctional*>{&composite, &pairwise, &two_layer}) {
      const DerivativeReport rep = validate_derivatives(*F, 1, 1e-4);
      worst = std::max(worst, rep.worst());
      if (!rep.all_pass()) pass = false;
    }
    line(1, pass && worst < 1e-4, "derivative cross-checks, worst rel err %.3g (tol 1e-4)", worst);
  }

  // ---- 2: Gibbs fixed point and first-order condition ----
  {
    const ZeroFunctional zero(1);
    const FixedPointResult rz = fixed_point_solve(zero, u, cfg.sigma, cfg.grid);
    const GridDensity mu = GridDensity::from_potential(cfg.grid, u);
    double exact_diff = 0.0;
    for (int i = 0; i < mu.cells(); ++i)
      exact_diff = std::max(exact_diff, std::abs(rz.m_star.value(i) - mu.value(i)));

    const PairwiseInteraction pw(1, 1.0, 1.0);
    const FixedPointResult ra = fixed_point_solve(pw, u, 1.0, cfg.grid, 0.5);
    const FixedPointResult rb = fixed_point_solve(pw, u, 1.0, cfg.grid, 1.0);
    double damp_diff = 0.0;
    for (int i = 0; i < ra.m_star.cells(); ++i)
      damp_diff = std::max(damp_diff, std::abs(ra.m_star.value(i) - rb.m_star.value(i)));

    const bool pass = rz.converged && rz.foc_residual < 1e-8 && exact_diff < 1e-10 && ra.converged &&
                      rb.converged && ra.foc_residual < 1e-8 && damp_diff < 1e-9;
    line(2, pass,
         "FOC residual %.3g (no interaction, exact-map gap %.3g) and %.3g (pairwise) < 1e-8; "
         "damping sweep sup-diff %.3g",
         rz.foc_residual, exact_diff, ra.foc_residual, damp_diff);
  }

  // ---- 3 & 10: dissipation and oscillation along one grid flow ----
  {
    const FixedPointResult star = fixed_point_solve(composite, u, cfg.sigma, cfg.grid, cfg.fp_damping,
                                                    cfg.fp_tol, cfg.fp_max_iter);
    const double f_star = free_energy_grid(composite, u, cfg.sigma, star.m_star).total;

    GridDensity m = GridDensity::gaussian(cfg.grid, cfg.init.mean, cfg.init.cov);
    const double dt = cfg.dt;
    const int steps = static_cast<int>(std::llround(10.0 / dt));
    const int stride = static_cast<int>(std::llround(0.05 / dt));

    double prev_fe = free_energy_grid(composite, u, cfg.sigma, m).total;
    double worst_rise = 0.0;
    std::vector<double> ts, gaps, oscs;
    ts.push_back(0.0);
    gaps.push_back(prev_fe - f_star);
    oscs.push_back(oscillation_of_v(composite, u, cfg.sigma, m));
    for (int k = 1; k <= steps; ++k) {
      fokker_planck_step(m, composite, u, cfg.sigma, dt, FpScheme::implicit_exponential);
      const double fe = free_energy_grid(composite, u, cfg.sigma, m).total;
      worst_rise = std::max(worst_rise, fe - prev_fe);
      prev_fe = fe;
      if (k % stride == 0) {
        ts.push_back(k * dt);
        gaps.push_back(fe - f_star);
        oscs.push_back(oscillation_of_v(composite, u, cfg.sigma, m));
      }
    }

    std::vector<double> lt, lg;
    for (size_t i = 0; i < ts.size(); ++i) {
      if (gaps[i] > 1e-13) {
        lt.push_back(ts[i]);
        lg.push_back(std::log(gaps[i]));
      }
    }
    const LinearFit lf = fit_linear(lt, lg);
    const bool pass3 = worst_rise < 1e-10 && lf.r2 > 0.99 && lf.slope < 0.0;
    line(3, pass3,
         "free energy non-increasing (worst per-step rise %.3g < 1e-10); log-gap affine: R^2 %.4f "
         "(> 0.99), rate %.3f",
         worst_rise, lf.r2, -lf.slope);

    double osc_early = 0.0, osc_all = 0.0;
    for (size_t i = 0; i < ts.size(); ++i) {
      osc_all = std::max(osc_all, oscs[i]);
      if (ts[i] <= 1.0 + 1e-12) osc_early = std::max(osc_early, oscs[i]);
    }
    line(10, osc_all <= 1.1 * osc_early,
         "oscillation of v: max %.4f over t in [0,10] vs %.4f over t in [0,1] (ratio %.3f <= 1.1)",
         osc_all, osc_early, osc_all / osc_early);
  }

  // ---- 4-6 + 12: the coupled sweep at the default step and at dt/2 ----
  {
    PocSweepReport base = run_poc_sweep(cfg);
    const SweepSummaryChecks cb = check_sweep(base);
    if (!base.flags.empty()) {
      std::printf("       sweep notes:");
      for (const auto& f : base.flags) std::printf(" [%s]", f.c_str());
      std::printf("\n");
    }

    line(4, cb.gap_band && cb.uit && !base.any_partial,
         "sup-gap slope %.3f in [-1.35,-0.65] (CI [%.3f, %.3f]); late/early gap ratio worst %.3f <= 2",
         base.gap_fit.slope, base.gap_fit.slope_lo, base.gap_fit.slope_hi, cb.worst_uit_ratio);

    line(5, cb.value_band && cb.decay_rate_positive,
         "value plateau slope %.3f in [-1.35,-0.65]; relaxation rate %.4f > 0 (floor %.2g, r2 %.2f)",
         base.value_fit.slope, base.value_decay.rate, base.value_decay.floor, base.value_decay.r2);

    line(6, cb.mismatch_band && cb.entropy_monotone,
         "drift-mismatch slope %.3f in [-1.35,-0.65]; marginal relative entropy decreasing "
         "(worst rise-minus-slack %.2g <= 0)",
         base.mismatch_fit.slope, cb.worst_entropy_excess);

    // dt/2 rerun: every fitted statistic moves less than its confidence halfwidth
    ExperimentConfig half = cfg;
    half.dt = cfg.dt / 2.0;
    PocSweepReport fine = run_poc_sweep(half);
    const SweepSummaryChecks cf = check_sweep(fine);

    const double d_gap = std::abs(fine.gap_fit.slope - base.gap_fit.slope);
    const double d_val = std::abs(fine.value_fit.slope - base.value_fit.slope);
    const double d_mis = std::abs(fine.mismatch_fit.slope - base.mismatch_fit.slope);
    const double hw_gap = 0.5 * (base.gap_fit.slope_hi - base.gap_fit.slope_lo);
    const double hw_val = 0.5 * (base.value_fit.slope_hi - base.value_fit.slope_lo);
    const double hw_mis = 0.5 * (base.mismatch_fit.slope_hi - base.mismatch_fit.slope_lo);
    const bool same_verdicts = cb.gap_band == cf.gap_band && cb.uit == cf.uit &&
                               cb.value_band == cf.value_band &&
                               cb.decay_rate_positive == cf.decay_rate_positive &&
                               cb.mismatch_band == cf.mismatch_band &&
                               cb.entropy_monotone == cf.entropy_monotone;
    line(12, d_gap < hw_gap && d_val < hw_val && d_mis < hw_mis && same_verdicts,
         "halving dt moves slopes by %.3f/%.3f/%.3f (gap/value/mismatch) vs CI halfwidths "
         "%.3f/%.3f/%.3f; verdicts unchanged: %s",
         d_gap, d_val, d_mis, hw_gap, hw_val, hw_mis, same_verdicts ? "yes" : "no");
  }

  // ---- 7: empirical-measure transport rate ----
  {
    const std::vector<int> ns{32, 64, 128, 256, 512, 1024, 2048, 4096};
    const RateReport rep = empirical_w2_rate(DistributionSpec::gaussian(0.0, 1.0), ns, 32, cfg.seed);
    // context: the fitted trend of the root-mean distance
    std::vector<double> xs, rs;
    for (const auto& p : rep.points) {
      xs.push_back(p.n);
      rs.push_back(std::sqrt(p.mean));
    }
    const PowerlawFit root_fit = fit_powerlaw(xs, rs, 0);
    line(7, in_band(rep.fit.slope, -0.5, 0.15),
         "mean squared-distance slope %.3f (CI [%.3f, %.3f]) vs required -0.5 +/- 0.15; "
         "root-mean slope %.3f",
         rep.fit.slope, rep.fit.slope_lo, rep.fit.slope_hi, root_fit.slope);
  }

  // ---- 8: concentration of a linear statistic and leave-one-out stability ----
  {
    const double x0 = 0.3;
    const GridDensity law = GridDensity::gaussian(cfg.grid, 0.0, 1.0);
    double g_law = 0.0;
    composite.intrinsic_derivative(law.measure(), &x0, &g_law);

    const std::vector<int> ns{8, 16, 32, 64, 128, 256, 512};
    const int reps = 256;
    std::vector<double> mean_sq;
    for (int n : ns) {
      double acc = 0.0;
      for (int r = 0; r < reps; ++r) {
        const uint64_t seed = CounterRng(cfg.seed, Stream::scratch, 0x8a).bits((uint64_t)n * 1024 + r);
        const ParticleCloud c = sample_cloud(DistributionSpec::gaussian(0.0, 1.0), n, seed);
        double g = 0.0;
        composite.intrinsic_derivative(c.measure(), &x0, &g);
        acc += (g - g_law) * (g - g_law);
      }
      mean_sq.push_back(acc / reps);
    }
    std::vector<double> xs(ns.begin(), ns.end());
    const PowerlawFit fit = fit_powerlaw(xs, mean_sq, 200, cfg.seed ^ 0x88);

    // pointwise leave-one-out bound with the analytic derivative sup
    const double th = std::tanh(x0);
    const double sup_dgdm = 2.0 * cfg.functional.g_scale * (1.0 - th * th);
    double worst_excess = -1e300;
    bool loo_ok = true;
    for (int n : ns) {
      const ParticleCloud c = sample_cloud(DistributionSpec::gaussian(0.0, 1.0), n, cfg.seed + n);
      double g_full = 0.0;
      composite.intrinsic_derivative(c.measure(), &x0, &g_full);
      const double bound = 2.0 * sup_dgdm / n;
      for (int i = 0; i < n; ++i) {
        double g_loo = 0.0;
        composite.intrinsic_derivative(leave_one_out(c, i), &x0, &g_loo);
        const double excess = std::abs(g_loo - g_full) - bound;
        worst_excess = std::max(worst_excess, excess);
        if (excess > 1e-15) loo_ok = false;
      }
    }
    line(8, in_band(fit.slope, -1.0, 0.35) && loo_ok,
         "mean |G(m_X)-G(m)|^2 slope %.3f in [-1.35,-0.65]; leave-one-out within 2 sup/n "
         "(worst margin %.2g)",
         fit.slope, worst_excess);
  }

  // ---- 9: conditional-entropy identities on random joints ----
  {
    const CounterRng rng(cfg.seed, Stream::scratch, 0xec);
    double worst_gap = 0.0, worst_order = 0.0;
    for (uint64_t i = 0; i < 1000; ++i) {
      std::vector<int> sizes(2 + rng.below(3 * i, 3));
      for (size_t v = 0; v < sizes.size(); ++v)
        sizes[v] = 2 + static_cast<int>(rng.below(3 * i + 1 + v, 7));
      const DiscreteJoint j = DiscreteJoint::random(sizes, rng.bits(3 * i + 2));
      const ChainEntropyResult r = chain_entropy_check(j);
      worst_gap = std::max(worst_gap, std::abs(r.chain_sum - r.joint_log_score));
      worst_order = std::max(worst_order, r.chain_sum - r.full_conditional_sum);
    }
    line(9, worst_gap < 1e-10 && worst_order <= 1e-12,
         "1000 random joints: telescoping gap %.3g < 1e-10; conditional sums ordered "
         "(worst violation %.3g)",
         worst_gap, worst_order);
  }

  // ---- 11: transport oracles agree ----
  {
    const CounterRng rng(cfg.seed, Stream::scratch, 0xa5);
    uint64_t ctr = 0;
    double worst = 0.0;
    for (int n = 2; n <= 6; ++n) {
      for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> cost(n * n);
        for (double& v : cost) v = rng.uniform(ctr++, 0.0, 4.0);
        std::vector<int> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        double brute = 1e300;
        do {
          double c = 0.0;
          for (int i = 0; i < n; ++i) c += cost[i * n + perm[i]];
          brute = std::min(brute, c);
        } while (std::next_permutation(perm.begin(), perm.end()));
        worst = std::max(worst, std::abs(solve_assignment(cost, n) - brute));
      }
    }

    const ParticleCloud a = sample_cloud(DistributionSpec::gaussian(0.0, 1.0, 2), 64, cfg.seed + 1);
    const ParticleCloud b = sample_cloud(DistributionSpec::gaussian(0.5, 1.5, 2), 64, cfg.seed + 2);
    const double exact = w2_exact_assignment(a, b);
    double scale = 0.0;
    for (int i = 0; i < 64; ++i)
      for (int k = 0; k < 2; ++k) {
        const double d = a.point(i)[k] - b.point(i)[k];
        scale += d * d;
      }
    scale /= 64;
    const SinkhornResult sk = w2_sinkhorn(a.measure(), b.measure(), 0.01 * scale);
    const double rel = std::abs(sk.cost - exact) / exact;
    line(11, worst < 1e-12 && rel < 0.05,
         "assignment vs brute force worst gap %.2g; Sinkhorn vs exact rel err %.4f < 0.05 "
         "(eps %.3g, %d iterations, marginal err %.2g)",
         worst, rel, sk.epsilon, sk.iterations, sk.marginal_violation);
  }

  std::printf("%d of 12 criteria failed\n", failures);
  return failures;
}
