#include "mfl/dynamics.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "mfl/metrics.hpp"

namespace mfl {

namespace {

constexpr uint64_t kOracleStreamOffset = uint64_t{1} << 40;

struct Diverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace

std::vector<double> make_save_times(double t_end, double every) {
  if (every <= 0.0 || t_end < 0.0) throw std::invalid_argument("save times: bad stride");
  std::vector<double> ts;
  for (double t = 0.0; t <= t_end + 1e-12; t += every) ts.push_back(std::min(t, t_end));
  if (ts.empty() || ts.back() < t_end - 1e-12) ts.push_back(t_end);
  return ts;
}

FrozenCloudOracle::FrozenCloudOracle(const DistributionSpec& init, int n_ref, uint64_t seed,
                                     const MeanFieldFunctional& F, const ConfiningPotential& u,
                                     double sigma, Exec policy)
    : big_(sample_cloud(init, n_ref, seed, Stream::oracle_noise, kOracleStreamOffset)),
      F_(&F),
      u_(&u),
      sigma_(sigma),
      policy_(policy) {}

void FrozenCloudOracle::advance(double dt) {
  em_step_interacting(big_, *F_, *u_, sigma_, dt, step_++, policy_, drift_buf_);
}

CoupledSystem make_coupled(const DistributionSpec& init, int n, uint64_t seed, bool identical_start) {
  CoupledSystem sys;
  sys.interacting = sample_cloud(init, n, seed, Stream::init);
  sys.reference = identical_start ? sys.interacting : sample_cloud(init, n, seed, Stream::reference_init);
  return sys;
}

void em_commit(ParticleCloud& c, const double* mean_field_drift, const ConfiningPotential& u, double sigma,
               double dt, uint64_t step_index, Exec policy) {
  const int n = c.size(), d = c.dim();
  const double half_s2 = 0.5 * sigma * sigma;
  const double root_dt = std::sqrt(dt);
  std::atomic<int> bad{-1};
  parallel_for(policy, n, [&](int i) {
    double* x = c.point(i);
    const double* b = mean_field_drift + static_cast<size_t>(i) * d;
    const CounterRng rng = c.noise_rng(i);
    for (int k = 0; k < d; ++k) {
      const double drift = b[k] + half_s2 * u.grad(x[k]);
      x[k] += -drift * dt + sigma * root_dt * rng.normal(step_index * d + k);
      if (!std::isfinite(x[k])) bad.store(i, std::memory_order_relaxed);
    }
  });
  if (bad.load() >= 0)
    throw Diverged("em_step: non-finite position for particle " + std::to_string(bad.load()) + " at step " +
                   std::to_string(step_index));
}

void em_step(ParticleCloud& c, const MeasureRef& law, const MeanFieldFunctional& F,
             const ConfiningPotential& u, double sigma, double dt, uint64_t step_index, Exec policy,
             std::vector<double>& drift_buf) {
  const int n = c.size(), d = c.dim();
  drift_buf.resize(static_cast<size_t>(n) * d);
  F.dmf_batch(law, c.data(), n, drift_buf.data(), policy);
  em_commit(c, drift_buf.data(), u, sigma, dt, step_index, policy);
}

void em_step_interacting(ParticleCloud& c, const MeanFieldFunctional& F, const ConfiningPotential& u,
                         double sigma, double dt, uint64_t step_index, Exec policy,
                         std::vector<double>& drift_buf) {
  em_step(c, c.measure(), F, u, sigma, dt, step_index, policy, drift_buf);
}

double drift_mismatch(const ParticleCloud& c, const MeasureRef& law, const MeanFieldFunctional& F,
                      double sigma, Exec policy) {
  const int n = c.size(), d = c.dim();
  std::vector<double> a(static_cast<size_t>(n) * d), b(static_cast<size_t>(n) * d);
  F.dmf_batch(c.measure(), c.data(), n, a.data(), policy);
  F.dmf_batch(law, c.data(), n, b.data(), policy);
  double acc = 0.0;
  for (size_t j = 0; j < a.size(); ++j) {
    const double e = a[j] - b[j];
    acc += e * e;
  }
  return acc / (4.0 * sigma * sigma * n);
}

double moment_bound(const MeanFieldFunctional& F, const ConfiningPotential& u, double sigma, int d,
                    double moment2_at_0) {
  const double c = u.hess_low();
  if (c <= 0.0 || sigma <= 0.0) throw std::invalid_argument("moment_bound: needs positive curvature and sigma");
  const double B = F.linear_derivative_bound();  // |D_mF| is bounded by the same oscillation scale
  const double s2c = sigma * sigma * c;
  const double level = (2.0 * B * B / s2c + d * sigma * sigma) * 2.0 / s2c;
  return std::max(moment2_at_0, level);
}

namespace {

double gap_sq_per_particle(const ParticleCloud& a, const ParticleCloud& b) {
  double acc = 0.0;
  for (int i = 0; i < a.size(); ++i)
    for (int k = 0; k < a.dim(); ++k) {
      const double e = a.point(i)[k] - b.point(i)[k];
      acc += e * e;
    }
  return acc / a.size();
}

}  // namespace

RunReport run_coupled(CoupledSystem& sys, const MeanFieldFunctional& F, const ConfiningPotential& u,
                      const SimParams& params, MeanFieldOracle& oracle, const RunOptions& opts) {
  RunReport rep;
  const int n = sys.interacting.size(), d = sys.interacting.dim();
  if (sys.reference.size() != n || sys.reference.dim() != d)
    throw std::invalid_argument("run_coupled: coupled clouds must match in shape");
  if (params.dt <= 0.0 || params.t_end < 0.0) throw std::invalid_argument("run_coupled: bad time grid");

  const uint64_t n_steps = static_cast<uint64_t>(std::llround(params.t_end / params.dt));
  // map save times onto step indices
  std::vector<uint64_t> save_steps;
  for (double t : params.save_times) {
    if (t < -1e-12 || t > params.t_end + 1e-12)
      throw std::invalid_argument("run_coupled: save time outside [0, t_end]");
    save_steps.push_back(static_cast<uint64_t>(std::llround(t / params.dt)));
  }
  for (size_t i = 1; i < save_steps.size(); ++i)
    if (save_steps[i] <= save_steps[i - 1]) throw std::invalid_argument("run_coupled: save times must increase");

  const GridDensity mu = GridDensity::from_potential(opts.entropy_grid, u);

  std::vector<double> drift_int, drift_ref;
  size_t next_save = 0;

  auto record = [&](uint64_t step) {
    const double t = step * params.dt;
    RunRow row;
    row.t = t;
    row.n = n;
    row.seed = params.seed;
    row.gap_sq_per_particle = gap_sq_per_particle(sys.interacting, sys.reference);
    row.moment2 = empirical_moment(sys.interacting, 2);
    row.drift_mismatch = drift_mismatch(sys.interacting, oracle.measure(), F, params.sigma, params.policy);
    row.f_emp = F.eval(sys.interacting.measure());
    row.free_energy_per_particle = row.f_emp;
    if (d == 1) {
      try {
        const double hrel = relative_entropy_1d(sys.interacting, mu);
        row.free_energy_per_particle += 0.5 * params.sigma * params.sigma * hrel;
      } catch (const std::exception& e) {
        if (rep.flag.empty()) rep.flag = std::string("entropy proxy unavailable: ") + e.what();
        row.free_energy_per_particle = std::numeric_limits<double>::quiet_NaN();
      }
    } else if (rep.flag.empty()) {
      rep.flag = "entropy term omitted for d > 1";
    }
    rep.rows.push_back(row);

    if (opts.record_snapshots && d == 1 && t >= opts.snapshot_t_lo - 1e-12 &&
        t <= opts.snapshot_t_hi + 1e-12) {
      rep.snapshot_times.push_back(t);
      rep.snapshots.emplace_back(sys.interacting.data(), sys.interacting.data() + n);
    }

    // domain adequacy: the oracle law must never feel the boundary
    if (const GridDensity* g = oracle.grid()) {
      const double tm = g->tail_mass(0.9 * g->spec().half_width);
      if (tm > 1e-8 && rep.flag.empty())
        rep.flag = "oracle tail mass " + std::to_string(tm) + " beyond 0.9 L at t " + std::to_string(t);
    }

    const RunObservation obs{t, step, sys.interacting, sys.reference, rep.rows.back()};
    for (const auto& ob : opts.observers) ob(obs);
  };

  try {
    for (uint64_t step = 0;; ++step) {
      if (next_save < save_steps.size() && save_steps[next_save] == step) {
        record(step);
        ++next_save;
      }
      if (step == n_steps) break;
      // both systems read pre-step states; the oracle advances afterwards
      em_step(sys.reference, oracle.measure(), F, u, params.sigma, params.dt, step, params.policy,
              drift_ref);
      em_step_interacting(sys.interacting, F, u, params.sigma, params.dt, step, params.policy, drift_int);
      oracle.advance(params.dt);
    }
  } catch (const std::exception& e) {
    rep.partial = true;
    rep.flag = e.what();
  }
  return rep;
}

void write_run_csv(const std::string& path, const std::vector<RunRow>& rows, bool append) {
  std::FILE* f = std::fopen(path.c_str(), append ? "a" : "w");
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  if (!append)
    std::fprintf(f, "t,n,seed,gap_sq_per_particle,free_energy_per_particle,moment2,drift_mismatch\n");
  for (const auto& r : rows)
    std::fprintf(f, "%.17g,%d,%llu,%.17g,%.17g,%.17g,%.17g\n", r.t, r.n,
                 static_cast<unsigned long long>(r.seed), r.gap_sq_per_particle,
                 r.free_energy_per_particle, r.moment2, r.drift_mismatch);
  std::fclose(f);
}

}  // namespace mfl
