#include "mfl/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "mfl/rng.hpp"

#ifndef MFL_VERSION
#define MFL_VERSION "0.1.0"
#endif

namespace mfl {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

GridDensity initial_density(const ExperimentConfig& cfg) {
  if (cfg.init.kind == "gaussian") return GridDensity::gaussian(cfg.grid, cfg.init.mean, cfg.init.cov);
  return GridDensity::uniform_on(cfg.grid, cfg.init.a, cfg.init.b);
}

// deterministic flow states at the save times, stepped exactly like the
// per-run grid oracle (record before stepping)
std::vector<GridDensity> flow_snapshots(const GridDensity& m0, const MeanFieldFunctional& F,
                                        const ConfiningPotential& u, double sigma, double dt,
                                        const std::vector<double>& save_times, FpScheme scheme) {
  std::vector<uint64_t> save_steps;
  for (double t : save_times) save_steps.push_back(static_cast<uint64_t>(std::llround(t / dt)));
  std::vector<GridDensity> out;
  GridDensity m = m0;
  size_t next = 0;
  for (uint64_t step = 0;; ++step) {
    if (next < save_steps.size() && save_steps[next] == step) {
      out.push_back(m);
      ++next;
    }
    if (next == save_steps.size()) break;
    fokker_planck_step(m, F, u, sigma, dt, scheme);
  }
  return out;
}

double corrected_kl(const std::vector<double>& xs, const GridDensity& ref) {
  const EntropyEstimate e = relative_entropy_detail(xs.data(), static_cast<int>(xs.size()), ref);
  return e.kl - e.bias_correction;
}

struct CsvOut {
  std::FILE* f = nullptr;
  explicit CsvOut(const std::string& path) : f(std::fopen(path.c_str(), "w")) {
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
  }
  ~CsvOut() {
    if (f) std::fclose(f);
  }
};

void add_flag(std::vector<std::string>& flags, const std::string& s) {
  for (const auto& x : flags)
    if (x == s) return;
  flags.push_back(s);
}

std::string join(const std::vector<std::string>& v, const char* sep) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += v[i];
  }
  return s;
}

}  // namespace

PocSweepReport run_poc_sweep(const ExperimentConfig& cfg, Exec policy) {
  validate_config(cfg);
  const auto F = make_functional(cfg);
  const ConfiningPotential u = make_potential(cfg);
  const DistributionSpec init = make_init(cfg);
  const int d = init.d;
  const FpScheme scheme = fp_scheme_from_string(cfg.scheme);
  const bool one_dim = (d == 1);
  if (cfg.oracle == "grid" && !one_dim)
    throw std::invalid_argument("poc sweep: grid oracle needs a one-dimensional functional");

  PocSweepReport rep;
  rep.n_list = cfg.n_list;
  rep.save_times = make_save_times(cfg.t_end, cfg.save_every);
  const int NN = static_cast<int>(cfg.n_list.size());
  const int R = cfg.replicas;
  const int S = static_cast<int>(rep.save_times.size());

  // stationary reference and its free energy
  const FixedPointResult fp = fixed_point_solve(*F, u, cfg.sigma, cfg.grid, cfg.fp_damping, cfg.fp_tol,
                                                cfg.fp_max_iter);
  if (!fp.converged)
    add_flag(rep.flags, "stationary solve not converged (last change " +
                            std::to_string(fp.last_change) + ")");
  rep.f_star = free_energy_grid(*F, u, cfg.sigma, fp.m_star).total;

  // deterministic law states at the save times (entropy references)
  std::vector<GridDensity> law;
  if (one_dim)
    law = flow_snapshots(initial_density(cfg), *F, u, cfg.sigma, cfg.dt, rep.save_times, scheme);
  const GridDensity mu = GridDensity::from_potential(cfg.grid, u);

  // One coupled system per (n, replica), all stepped in lockstep against a
  // single shared oracle: the law is deterministic and identical for every
  // run, so its flow — the dominant cost — is computed once, and the
  // reference drifts of all systems go through one batched evaluation per
  // step (one hoist of the law summaries).
  struct SweepSys {
    CoupledSystem sys;
    uint64_t seed = 0;
    bool dead = false;
    std::vector<double> drift_buf;
  };
  const int J = NN * R;
  std::vector<SweepSys> systems(J);
  std::vector<RunReport> runs(J);
  std::vector<size_t> ref_offset(J);
  size_t ref_total = 0;
  for (int job = 0; job < J; ++job) {
    const int ni = job / R, r = job % R;
    systems[job].seed =
        CounterRng(cfg.seed, Stream::scratch, (static_cast<uint64_t>(ni) << 32) | static_cast<uint64_t>(r))
            .bits(1);
    systems[job].sys = make_coupled(init, cfg.n_list[ni], systems[job].seed, true);
    ref_offset[job] = ref_total;
    ref_total += static_cast<size_t>(cfg.n_list[ni]) * d;
  }

  std::unique_ptr<MeanFieldOracle> oracle;
  if (cfg.oracle == "frozen_cloud")
    oracle = std::make_unique<FrozenCloudOracle>(init, cfg.n_ref, cfg.seed, *F, u, cfg.sigma, policy);
  else
    oracle = std::make_unique<GridFlowOracle>(initial_density(cfg), *F, u, cfg.sigma, scheme);

  std::vector<uint64_t> save_steps;
  for (double t : rep.save_times) save_steps.push_back(static_cast<uint64_t>(std::llround(t / cfg.dt)));
  const uint64_t n_steps = static_cast<uint64_t>(std::llround(cfg.t_end / cfg.dt));
  std::vector<double> big_xs(ref_total), big_drift(ref_total);

  auto record_all = [&](uint64_t step) {
    const double t = step * cfg.dt;
    const MeasureRef law = oracle->measure();
    for (int job = 0; job < J; ++job) {
      if (systems[job].dead) continue;
      const CoupledSystem& sys = systems[job].sys;
      const int n = sys.interacting.size();
      RunRow row;
      row.t = t;
      row.n = n;
      row.seed = systems[job].seed;
      double gap = 0.0;
      for (size_t k = 0; k < static_cast<size_t>(n) * d; ++k) {
        const double e = sys.interacting.data()[k] - sys.reference.data()[k];
        gap += e * e;
      }
      row.gap_sq_per_particle = gap / n;
      row.moment2 = empirical_moment(sys.interacting, 2);
      row.drift_mismatch = drift_mismatch(sys.interacting, law, *F, cfg.sigma, policy);
      row.f_emp = F->eval(sys.interacting.measure());
      row.free_energy_per_particle = row.f_emp;
      runs[job].rows.push_back(row);
      if (one_dim)
        runs[job].snapshots.emplace_back(sys.interacting.data(), sys.interacting.data() + n);
    }
    if (const GridDensity* g = oracle->grid()) {
      const double tm = g->tail_mass(0.9 * g->spec().half_width);
      if (tm > 1e-8)
        add_flag(rep.flags, "oracle tail mass " + std::to_string(tm) + " beyond 0.9 L at t " +
                                std::to_string(t));
    }
  };

  try {
    size_t next_save = 0;
    for (uint64_t step = 0;; ++step) {
      if (next_save < save_steps.size() && save_steps[next_save] == step) {
        record_all(step);
        ++next_save;
      }
      if (step == n_steps) break;
      // every system reads the same pre-step law; the oracle advances after
      const MeasureRef law = oracle->measure();
      for (int job = 0; job < J; ++job) {
        if (systems[job].dead) continue;
        const ParticleCloud& rc = systems[job].sys.reference;
        std::copy(rc.data(), rc.data() + static_cast<size_t>(rc.size()) * d,
                  big_xs.begin() + ref_offset[job]);
      }
      F->dmf_batch(law, big_xs.data(), static_cast<int>(ref_total / d), big_drift.data(), policy);
      parallel_for(policy, J, [&](int job) {
        if (systems[job].dead) return;
        try {
          em_commit(systems[job].sys.reference, big_drift.data() + ref_offset[job], u, cfg.sigma, cfg.dt,
                    step, Exec::serial);
          em_step_interacting(systems[job].sys.interacting, *F, u, cfg.sigma, cfg.dt, step, Exec::serial,
                              systems[job].drift_buf);
        } catch (const std::exception& e) {
          systems[job].dead = true;
          runs[job].partial = true;
          runs[job].flag = e.what();
        }
      });
      oracle->advance(cfg.dt);
    }
  } catch (const std::exception& e) {
    for (int job = 0; job < J; ++job) {
      if (systems[job].dead) continue;
      systems[job].dead = true;
      runs[job].partial = true;
      runs[job].flag = std::string("law flow failure: ") + e.what();
    }
  }

  for (const auto& rr : runs) {
    if (rr.partial) rep.any_partial = true;
    if (!rr.flag.empty()) add_flag(rep.flags, rr.flag);
  }

  // window save indices for plateau statistics
  std::vector<int> W;
  for (int s = 0; s < S; ++s)
    if (rep.save_times[s] >= cfg.window_lo - 1e-9 && rep.save_times[s] <= cfg.window_hi + 1e-9)
      W.push_back(s);
  if (W.empty()) add_flag(rep.flags, "empty plateau window");

  rep.sup_gap.assign(NN, kNaN);
  rep.gap_early.assign(NN, kNaN);
  rep.gap_late.assign(NN, kNaN);
  rep.value_gap.assign(NN, kNaN);
  rep.value_se.assign(NN, kNaN);
  rep.mismatch.assign(NN, kNaN);
  rep.mismatch_se.assign(NN, kNaN);
  rep.entropy1.assign(NN, kNaN);
  rep.entropy1_se.assign(NN, kNaN);
  rep.gap_by_t.assign(NN, std::vector<double>(S, kNaN));
  rep.mismatch_by_t.assign(NN, std::vector<double>(S, kNaN));
  rep.value_by_t.assign(NN, std::vector<double>(S, kNaN));

  const double half_s2 = 0.5 * cfg.sigma * cfg.sigma;

  for (int ni = 0; ni < NN; ++ni) {
    const RunReport* rr = &runs[static_cast<size_t>(ni) * R];

    // replica-averaged series and the per-t pooled value proxy
    for (int s = 0; s < S; ++s) {
      double g = 0.0, mm = 0.0, fe = 0.0;
      int cnt = 0;
      std::vector<double> pool;
      for (int r = 0; r < R; ++r) {
        if (static_cast<size_t>(s) >= rr[r].rows.size()) continue;
        g += rr[r].rows[s].gap_sq_per_particle;
        mm += rr[r].rows[s].drift_mismatch;
        fe += rr[r].rows[s].f_emp;
        ++cnt;
        if (one_dim && static_cast<size_t>(s) < rr[r].snapshots.size())
          pool.insert(pool.end(), rr[r].snapshots[s].begin(), rr[r].snapshots[s].end());
      }
      if (cnt == 0) continue;
      rep.gap_by_t[ni][s] = g / cnt;
      rep.mismatch_by_t[ni][s] = mm / cnt;
      if (one_dim && !pool.empty()) {
        try {
          rep.value_by_t[ni][s] = fe / cnt + half_s2 * corrected_kl(pool, mu) - rep.f_star;
        } catch (const std::exception& e) {
          add_flag(rep.flags, std::string("value entropy term failed: ") + e.what());
        }
      }
    }

    // gap maxima: sup over t >= 1, split at window_lo
    double sup = -1.0, early = -1.0, late = -1.0;
    for (int s = 0; s < S; ++s) {
      const double t = rep.save_times[s], g = rep.gap_by_t[ni][s];
      if (std::isnan(g) || t < 1.0 - 1e-9) continue;
      sup = std::max(sup, g);
      if (t <= cfg.window_lo + 1e-9) early = std::max(early, g);
      if (t >= cfg.window_lo - 1e-9) late = std::max(late, g);
    }
    if (sup >= 0.0) rep.sup_gap[ni] = sup;
    if (early >= 0.0) rep.gap_early[ni] = early;
    if (late >= 0.0) rep.gap_late[ni] = late;

    // replicas contributing the full plateau window
    std::vector<int> valid;
    for (int r = 0; r < R; ++r) {
      bool ok = !W.empty();
      for (int s : W)
        if (static_cast<size_t>(s) >= rr[r].rows.size()) ok = false;
      if (ok) valid.push_back(r);
    }
    if (static_cast<int>(valid.size()) < R)
      add_flag(rep.flags, "n=" + std::to_string(cfg.n_list[ni]) + ": only " +
                              std::to_string(valid.size()) + "/" + std::to_string(R) +
                              " replicas reached the plateau window");
    if (valid.size() < 2) continue;

    // drift-mismatch plateau: per-replica window means
    {
      std::vector<double> per;
      for (int r : valid) {
        double acc = 0.0;
        for (int s : W) acc += rr[r].rows[s].drift_mismatch;
        per.push_back(acc / W.size());
      }
      double mean = 0.0;
      for (double v : per) mean += v;
      mean /= per.size();
      double var = 0.0;
      for (double v : per) var += (v - mean) * (v - mean);
      rep.mismatch[ni] = mean;
      rep.mismatch_se[ni] = std::sqrt(var / (per.size() - 1.0) / per.size());
    }

    if (!one_dim) continue;

    // value plateau: mean interaction + entropy of the pooled window sample,
    // jackknifed over replicas
    auto theta = [&](int skip) -> double {
      double fsum = 0.0;
      int fcnt = 0;
      std::vector<double> pool;
      for (int r : valid) {
        if (r == skip) continue;
        for (int s : W) {
          fsum += rr[r].rows[s].f_emp;
          ++fcnt;
          if (static_cast<size_t>(s) < rr[r].snapshots.size())
            pool.insert(pool.end(), rr[r].snapshots[s].begin(), rr[r].snapshots[s].end());
        }
      }
      if (fcnt == 0 || pool.empty()) return kNaN;
      try {
        return fsum / fcnt + half_s2 * corrected_kl(pool, mu) - rep.f_star;
      } catch (const std::exception&) {
        return kNaN;
      }
    };
    // one-particle marginal entropy against the law at each window time
    auto eta = [&](int skip) -> double {
      double acc = 0.0;
      int cnt = 0;
      std::vector<double> pool;
      for (int s : W) {
        pool.clear();
        for (int r : valid) {
          if (r == skip) continue;
          if (static_cast<size_t>(s) < rr[r].snapshots.size())
            pool.insert(pool.end(), rr[r].snapshots[s].begin(), rr[r].snapshots[s].end());
        }
        if (pool.empty()) continue;
        try {
          acc += corrected_kl(pool, law[s]);
          ++cnt;
        } catch (const std::exception&) {
        }
      }
      return cnt ? acc / cnt : kNaN;
    };

    auto jackknife = [&](auto&& stat, double& out, double& out_se) {
      out = stat(-1);
      if (std::isnan(out)) return;
      std::vector<double> leave;
      for (int r : valid) {
        const double v = stat(r);
        if (std::isnan(v)) return;
        leave.push_back(v);
      }
      double mean = 0.0;
      for (double v : leave) mean += v;
      mean /= leave.size();
      double var = 0.0;
      for (double v : leave) var += (v - mean) * (v - mean);
      out_se = std::sqrt(var * (leave.size() - 1.0) / leave.size());
    };
    jackknife(theta, rep.value_gap[ni], rep.value_se[ni]);
    jackknife(eta, rep.entropy1[ni], rep.entropy1_se[ni]);
  }

  // decay-law fits across n
  std::vector<double> ns(cfg.n_list.begin(), cfg.n_list.end());
  rep.gap_slope_by_t.assign(S, kNaN);
  for (int s = 0; s < S; ++s) {
    std::vector<double> fx, fy;
    for (int ni = 0; ni < NN; ++ni) {
      const double g = rep.gap_by_t[ni][s];
      if (std::isfinite(g) && g > 0.0) {
        fx.push_back(ns[ni]);
        fy.push_back(g);
      }
    }
    if (fx.size() >= 2) rep.gap_slope_by_t[s] = fit_powerlaw(fx, fy, 0).slope;
  }
  auto fit_positive = [&](const std::vector<double>& ys, PowerlawFit& out, bool& ok, const char* what) {
    std::vector<double> fx, fy;
    for (int i = 0; i < NN; ++i)
      if (std::isfinite(ys[i]) && ys[i] > 0.0) {
        fx.push_back(ns[i]);
        fy.push_back(ys[i]);
      }
    if (fx.size() < 2) {
      add_flag(rep.flags, std::string(what) + ": fewer than 2 positive points, fit skipped");
      return;
    }
    if (fx.size() < ys.size())
      add_flag(rep.flags, std::string(what) + ": " + std::to_string(ys.size() - fx.size()) +
                              " nonpositive point(s) excluded from the fit");
    out = fit_powerlaw(fx, fy);
    ok = true;
  };
  fit_positive(rep.sup_gap, rep.gap_fit, rep.gap_fit_ok, "gap decay");
  fit_positive(rep.value_gap, rep.value_fit, rep.value_fit_ok, "value decay");
  fit_positive(rep.mismatch, rep.mismatch_fit, rep.mismatch_fit_ok, "mismatch decay");

  // early-time relaxation of the value proxy at the largest n; only the
  // initial transient carries rate information, so cut the series shortly
  // after it first sinks into the noise band of the averaging window (the
  // couple of kept in-band points let a genuine floor stay identified)
  {
    const std::vector<double>& series = rep.value_by_t[NN - 1];
    int cut = S;
    {
      std::vector<double> tail;
      for (int s = 0; s < S; ++s)
        if (rep.save_times[s] >= cfg.window_lo - 1e-9 && std::isfinite(series[s])) tail.push_back(series[s]);
      if (tail.size() >= 4) {
        std::sort(tail.begin(), tail.end());
        const double med = tail[tail.size() / 2];
        double var = 0.0;
        for (double v : tail) var += (v - med) * (v - med);
        const double band = med + 3.0 * std::sqrt(var / double(tail.size()));
        for (int s = 0; s < S; ++s) {
          if (std::isfinite(series[s]) && series[s] <= band) {
            cut = std::min(S, s + 2);
            break;
          }
        }
      }
    }
    std::vector<double> ts, ys;
    for (int pass = 0; pass < 2 && ts.size() < 4; ++pass) {
      ts.clear();
      ys.clear();
      const int stop = (pass == 0) ? cut : S;
      for (int s = 0; s < stop; ++s) {
        const double v = series[s];
        if (std::isfinite(v) && v > 0.0) {
          ts.push_back(rep.save_times[s]);
          ys.push_back(v);
        }
      }
    }
    if (ts.size() >= 4) {
      try {
        rep.value_decay = fit_exp_plus_floor(ts, ys);
        rep.value_decay_ok = true;
      } catch (const std::exception& e) {
        add_flag(rep.flags, std::string("value relaxation fit failed: ") + e.what());
      }
    } else {
      add_flag(rep.flags, "value relaxation fit skipped: fewer than 4 positive points");
    }
  }
  return rep;
}

CommandResult cmd_validate(const ExperimentConfig& cfg, const std::string& out_dir) {
  set_threads(cfg.threads);
  const auto F = make_functional(cfg);
  DerivativeReport rep = validate_derivatives(*F, cfg.seed, 1e-4);

  // discrete conditional-entropy identities on random joints
  double worst_gap = 0.0, worst_excess = 0.0;
  const CounterRng rng(cfg.seed, Stream::scratch, 0xce);
  for (int i = 0; i < 100; ++i) {
    std::vector<int> sizes(2 + rng.below(3 * i, 3));
    for (size_t v = 0; v < sizes.size(); ++v)
      sizes[v] = 2 + static_cast<int>(rng.below(3 * i + 1 + v, 7));
    const DiscreteJoint j = DiscreteJoint::random(sizes, rng.bits(3 * i + 2));
    const ChainEntropyResult c = chain_entropy_check(j);
    worst_gap = std::max(worst_gap, std::abs(c.chain_sum - c.joint_log_score));
    worst_excess = std::max(worst_excess, c.chain_sum - c.full_conditional_sum);
  }
  rep.checks.push_back({"entropy_chain.telescoping", worst_gap, 1e-10, worst_gap < 1e-10});
  rep.checks.push_back(
      {"entropy_chain.conditioning_order", std::max(worst_excess, 0.0), 1e-12, worst_excess < 1e-12});

  std::filesystem::create_directories(out_dir);
  const std::string csv = (std::filesystem::path(out_dir) / "validate_report.csv").string();
  {
    CsvOut out(csv);
    std::fprintf(out.f, "check,max_rel_err,tol,pass\n");
    for (const auto& c : rep.checks)
      std::fprintf(out.f, "%s,%.17g,%.17g,%d\n", c.name.c_str(), c.max_rel_err, c.tol, c.pass ? 1 : 0);
  }
  write_manifest(out_dir, cfg, "validate", {"validate_report.csv"});

  CommandResult res;
  if (rep.all_pass()) {
    char buf[120];
    std::snprintf(buf, sizeof buf, "validate: %zu checks passed (worst error %.3g)", rep.checks.size(),
                  rep.worst());
    res.message = buf;
  } else {
    res.exit_code = 2;
    std::string names;
    for (const auto& c : rep.checks)
      if (!c.pass) names += (names.empty() ? "" : ", ") + c.name;
    res.message = "validate: FAILED checks: " + names;
  }
  return res;
}

CommandResult cmd_gibbs(const ExperimentConfig& cfg, const std::string& out_dir) {
  set_threads(cfg.threads);
  const auto F = make_functional(cfg);
  if (F->dim() != 1) return {2, "gibbs: stationary solve needs a one-dimensional functional"};
  const ConfiningPotential u = make_potential(cfg);
  const FixedPointResult fp =
      fixed_point_solve(*F, u, cfg.sigma, cfg.grid, cfg.fp_damping, cfg.fp_tol, cfg.fp_max_iter);
  const FreeEnergyBreakdown fe = free_energy_grid(*F, u, cfg.sigma, fp.m_star);

  std::filesystem::create_directories(out_dir);
  write_density_csv((std::filesystem::path(out_dir) / "m_star.csv").string(), fp.m_star);
  {
    CsvOut out((std::filesystem::path(out_dir) / "gibbs_report.csv").string());
    std::fprintf(out.f, "iterations,converged,last_change,foc_residual,free_energy,interaction,entropy\n");
    std::fprintf(out.f, "%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", fp.iterations, fp.converged ? 1 : 0,
                 fp.last_change, fp.foc_residual, fe.total, fe.interaction, fe.entropy);
  }
  write_manifest(out_dir, cfg, "gibbs", {"m_star.csv", "gibbs_report.csv"});

  CommandResult res;
  res.exit_code = fp.converged ? 0 : 3;
  res.message = "gibbs: " + std::string(fp.converged ? "converged" : "NOT converged") + " in " +
                std::to_string(fp.iterations) + " sweeps, foc residual " +
                std::to_string(fp.foc_residual) + ", free energy " + std::to_string(fe.total);
  return res;
}

CommandResult cmd_simulate(const ExperimentConfig& cfg, const std::string& out_dir) {
  set_threads(cfg.threads);
  const auto F = make_functional(cfg);
  const ConfiningPotential u = make_potential(cfg);
  const DistributionSpec init = make_init(cfg);
  if (cfg.oracle == "grid" && init.d != 1)
    return {2, "simulate: grid oracle needs a one-dimensional functional"};

  CoupledSystem sys = make_coupled(init, cfg.n, cfg.seed, true);
  SimParams params;
  params.sigma = cfg.sigma;
  params.dt = cfg.dt;
  params.t_end = cfg.t_end;
  params.save_times = make_save_times(cfg.t_end, cfg.save_every);
  params.seed = cfg.seed;
  params.policy = Exec::parallel;
  RunOptions opts;
  opts.entropy_grid = cfg.grid;

  RunReport rr;
  if (cfg.oracle == "frozen_cloud") {
    FrozenCloudOracle oracle(init, cfg.n_ref, cfg.seed, *F, u, cfg.sigma, Exec::parallel);
    rr = run_coupled(sys, *F, u, params, oracle, opts);
  } else {
    GridFlowOracle oracle(initial_density(cfg), *F, u, cfg.sigma, fp_scheme_from_string(cfg.scheme));
    rr = run_coupled(sys, *F, u, params, oracle, opts);
  }

  std::filesystem::create_directories(out_dir);
  write_run_csv((std::filesystem::path(out_dir) / "run.csv").string(), rr.rows);
  write_cloud_csv((std::filesystem::path(out_dir) / "final_cloud.csv").string(), sys.interacting);
  write_manifest(out_dir, cfg, "simulate", {"run.csv", "final_cloud.csv"});

  CommandResult res;
  res.exit_code = rr.partial ? 4 : 0;
  res.message = "simulate: " + std::to_string(rr.rows.size()) + " saves at n=" + std::to_string(cfg.n) +
                (rr.partial ? " (PARTIAL: " + rr.flag + ")" : "") +
                (!rr.partial && !rr.flag.empty() ? " [" + rr.flag + "]" : "");
  return res;
}

CommandResult cmd_poc_sweep(const ExperimentConfig& cfg, const std::string& out_dir) {
  set_threads(cfg.threads);
  if (cfg.replicas < 8) return {2, "poc-sweep: needs replicas >= 8"};
  const PocSweepReport rep = run_poc_sweep(cfg, Exec::parallel);

  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);
  {
    CsvOut out((dir / "sweep_series.csv").string());
    std::fprintf(out.f, "t,n,gap_mean,mismatch_mean,value_mean\n");
    for (size_t ni = 0; ni < rep.n_list.size(); ++ni)
      for (size_t s = 0; s < rep.save_times.size(); ++s)
        std::fprintf(out.f, "%.17g,%d,%.17g,%.17g,%.17g\n", rep.save_times[s], rep.n_list[ni],
                     rep.gap_by_t[ni][s], rep.mismatch_by_t[ni][s], rep.value_by_t[ni][s]);
  }
  {
    CsvOut out((dir / "sweep_gap_slopes.csv").string());
    std::fprintf(out.f, "t,gap_slope\n");
    for (size_t s = 0; s < rep.save_times.size(); ++s)
      std::fprintf(out.f, "%.17g,%.17g\n", rep.save_times[s], rep.gap_slope_by_t[s]);
  }
  {
    CsvOut out((dir / "sweep_summary.csv").string());
    std::fprintf(out.f,
                 "n,sup_gap,gap_early,gap_late,value_gap,value_se,mismatch,mismatch_se,"
                 "entropy1,entropy1_se\n");
    for (size_t ni = 0; ni < rep.n_list.size(); ++ni)
      std::fprintf(out.f, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", rep.n_list[ni],
                   rep.sup_gap[ni], rep.gap_early[ni], rep.gap_late[ni], rep.value_gap[ni],
                   rep.value_se[ni], rep.mismatch[ni], rep.mismatch_se[ni], rep.entropy1[ni],
                   rep.entropy1_se[ni]);
  }
  {
    CsvOut out((dir / "sweep_fits.csv").string());
    std::fprintf(out.f, "quantity,slope,slope_lo,slope_hi,intercept,r2,resamples,ok\n");
    auto row = [&](const char* q, const PowerlawFit& f, bool ok) {
      std::fprintf(out.f, "%s,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%d\n", q, f.slope, f.slope_lo, f.slope_hi,
                   f.intercept, f.r2, f.resamples, ok ? 1 : 0);
    };
    row("sup_gap", rep.gap_fit, rep.gap_fit_ok);
    row("value_gap", rep.value_fit, rep.value_fit_ok);
    row("drift_mismatch", rep.mismatch_fit, rep.mismatch_fit_ok);
  }
  {
    CsvOut out((dir / "value_decay.csv").string());
    std::fprintf(out.f, "amplitude,rate,floor,r2,ok\n");
    std::fprintf(out.f, "%.17g,%.17g,%.17g,%.17g,%d\n", rep.value_decay.amplitude, rep.value_decay.rate,
                 rep.value_decay.floor, rep.value_decay.r2, rep.value_decay_ok ? 1 : 0);
  }
  write_manifest(out_dir, cfg, "poc-sweep",
                 {"sweep_series.csv", "sweep_gap_slopes.csv", "sweep_summary.csv", "sweep_fits.csv",
                  "value_decay.csv"});

  CommandResult res;
  char buf[256];
  std::snprintf(buf, sizeof buf, "poc-sweep: gap slope %.3f [%.3f, %.3f], value slope %.3f, mismatch slope %.3f",
                rep.gap_fit.slope, rep.gap_fit.slope_lo, rep.gap_fit.slope_hi, rep.value_fit.slope,
                rep.mismatch_fit.slope);
  res.message = buf;
  if (!rep.flags.empty()) res.message += "\nflags: " + join(rep.flags, "; ");
  return res;
}

CommandResult cmd_rate_fit(const std::vector<std::string>& inputs, const std::string& model,
                           const std::string& out_dir, uint64_t seed) {
  if (model != "powerlaw" && model != "exp_plus_floor")
    return {2, "rate-fit: model must be powerlaw or exp_plus_floor"};
  std::vector<double> xs, ys;
  for (const auto& path : inputs) {
    std::ifstream in(path);
    if (!in) return {2, "rate-fit: cannot open '" + path + "'"};
    std::string line;
    while (std::getline(in, line)) {
      std::stringstream ss(line);
      std::string ax, ay;
      if (!std::getline(ss, ax, ',') || !std::getline(ss, ay, ',')) continue;
      try {
        size_t px = 0, py = 0;
        const double x = std::stod(ax, &px);
        const double y = std::stod(ay, &py);
        xs.push_back(x);
        ys.push_back(y);
      } catch (const std::exception&) {
        continue;  // header or malformed row
      }
    }
  }
  if (xs.size() < 4) return {2, "rate-fit: needs at least 4 data points, got " + std::to_string(xs.size())};

  std::filesystem::create_directories(out_dir);
  const std::string csv = (std::filesystem::path(out_dir) / "rate_fit.csv").string();
  CommandResult res;
  try {
    if (model == "powerlaw") {
      const PowerlawFit f = fit_powerlaw(xs, ys, 200, seed);
      CsvOut out(csv);
      std::fprintf(out.f, "model,slope,slope_lo,slope_hi,intercept,r2,points\n");
      std::fprintf(out.f, "powerlaw,%.17g,%.17g,%.17g,%.17g,%.17g,%zu\n", f.slope, f.slope_lo, f.slope_hi,
                   f.intercept, f.r2, xs.size());
      char buf[160];
      std::snprintf(buf, sizeof buf, "rate-fit: slope %.6f [%.6f, %.6f], r2 %.4f", f.slope, f.slope_lo,
                    f.slope_hi, f.r2);
      res.message = buf;
    } else {
      const ExpFloorFit f = fit_exp_plus_floor(xs, ys);
      // bootstrap the rate the same way the power-law fit bootstraps its slope
      const CounterRng rng(seed, Stream::scratch, 0xb00);
      std::vector<double> rates;
      std::vector<double> bx(xs.size()), by(xs.size());
      uint64_t ctr = 0;
      for (int b = 0; b < 200; ++b) {
        for (size_t i = 0; i < xs.size(); ++i) {
          const size_t j = static_cast<size_t>(rng.below(ctr++, xs.size()));
          bx[i] = xs[j];
          by[i] = ys[j];
        }
        try {
          rates.push_back(fit_exp_plus_floor(bx, by).rate);
        } catch (const std::exception&) {
        }
      }
      double lo = f.rate, hi = f.rate;
      if (rates.size() >= 10) {
        std::sort(rates.begin(), rates.end());
        lo = rates[static_cast<size_t>(0.025 * (rates.size() - 1))];
        hi = rates[static_cast<size_t>(0.975 * (rates.size() - 1))];
      }
      CsvOut out(csv);
      std::fprintf(out.f, "model,rate,rate_lo,rate_hi,floor,amplitude,r2,points\n");
      std::fprintf(out.f, "exp_plus_floor,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%zu\n", f.rate, lo, hi,
                   f.floor, f.amplitude, f.r2, xs.size());
      char buf[160];
      std::snprintf(buf, sizeof buf, "rate-fit: rate %.6f [%.6f, %.6f], floor %.6g, r2 %.4f", f.rate, lo,
                    hi, f.floor, f.r2);
      res.message = buf;
    }
  } catch (const std::exception& e) {
    return {2, std::string("rate-fit: ") + e.what()};
  }

  // bespoke manifest: inputs replace the config echo
  nlohmann::json j;
  j["command"] = "rate-fit";
  j["inputs"] = inputs;
  j["model"] = model;
  j["seed"] = seed;
  j["outputs"] = {"rate_fit.csv"};
  j["version"] = MFL_VERSION;
  std::ofstream mf(std::filesystem::path(out_dir) / "manifest.json");
  mf << j.dump(2) << "\n";
  return res;
}

CommandResult cmd_entropy_chain(const ExperimentConfig& cfg, const std::string& out_dir, int count) {
  if (count < 1) return {2, "entropy-chain: count must be >= 1"};
  std::filesystem::create_directories(out_dir);
  const CounterRng rng(cfg.seed, Stream::scratch, 0xec);
  double worst_gap = 0.0, worst_excess = 0.0;
  {
    CsvOut out((std::filesystem::path(out_dir) / "entropy_chain.csv").string());
    std::fprintf(out.f, "joint_id,k,cells,chain_abs_gap,conditional_excess\n");
    for (int i = 0; i < count; ++i) {
      std::vector<int> sizes(2 + rng.below(3ull * i, 3));
      for (size_t v = 0; v < sizes.size(); ++v)
        sizes[v] = 2 + static_cast<int>(rng.below(3ull * i + 1 + v, 7));
      const DiscreteJoint j = DiscreteJoint::random(sizes, rng.bits(3ull * i + 2));
      const ChainEntropyResult c = chain_entropy_check(j);
      const double gap = std::abs(c.chain_sum - c.joint_log_score);
      const double excess = c.full_conditional_sum - c.chain_sum;
      worst_gap = std::max(worst_gap, gap);
      worst_excess = std::max(worst_excess, -excess);
      std::fprintf(out.f, "%d,%d,%zu,%.17g,%.17g\n", i, j.k(), j.cells(), gap, excess);
    }
  }
  write_manifest(out_dir, cfg, "entropy-chain", {"entropy_chain.csv"});

  CommandResult res;
  const bool ok = worst_gap < 1e-10 && worst_excess <= 1e-12;
  res.exit_code = ok ? 0 : 2;
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "entropy-chain: %d joints, worst telescoping gap %.3g, worst order violation %.3g%s", count,
                worst_gap, worst_excess, ok ? "" : " (FAILED)");
  res.message = buf;
  return res;
}

}  // namespace mfl
