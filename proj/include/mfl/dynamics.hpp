#pragma once
// Coupled particle dynamics: the n-particle interacting system
//   dX^i = -( D_mF(emp, X^i) + (sigma^2/2) grad u(X^i) ) dt + sigma dW^i
// and its mean-field reference
//   dXbar^i = -( D_mF(m_t, Xbar^i) + (sigma^2/2) grad u(Xbar^i) ) dt + sigma dW^i
// driven by the SAME increments (synchronous coupling), with m_t supplied by a
// pluggable oracle (deterministic grid flow, frozen big cloud, or stationary).

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "mfl/cloud.hpp"
#include "mfl/functionals.hpp"
#include "mfl/grid1d.hpp"
#include "mfl/kernels.hpp"

namespace mfl {

struct SimParams {
  double sigma = 1.0;
  double dt = 1e-3;
  double t_end = 50.0;
  std::vector<double> save_times;  // sorted, within [0, t_end]
  uint64_t seed = 1;
  Exec policy = Exec::parallel;
};

std::vector<double> make_save_times(double t_end, double every);

class MeanFieldOracle {
 public:
  virtual ~MeanFieldOracle() = default;
  virtual MeasureRef measure() const = 0;
  virtual void advance(double dt) = 0;
  virtual const GridDensity* grid() const { return nullptr; }
};

// authoritative d=1 oracle: the deterministic Fokker-Planck flow in lockstep
class GridFlowOracle final : public MeanFieldOracle {
 public:
  GridFlowOracle(GridDensity m0, const MeanFieldFunctional& F, const ConfiningPotential& u, double sigma,
                 FpScheme scheme = FpScheme::implicit_exponential)
      : m_(std::move(m0)), F_(&F), u_(&u), sigma_(sigma), scheme_(scheme) {}
  MeasureRef measure() const override { return m_.measure(); }
  void advance(double dt) override { fokker_planck_step(m_, *F_, *u_, sigma_, dt, scheme_); }
  const GridDensity* grid() const override { return &m_; }

 private:
  GridDensity m_;
  const MeanFieldFunctional* F_;
  const ConfiningPotential* u_;
  double sigma_;
  FpScheme scheme_;
};

class StationaryOracle final : public MeanFieldOracle {
 public:
  explicit StationaryOracle(GridDensity m) : m_(std::move(m)) {}
  MeasureRef measure() const override { return m_.measure(); }
  void advance(double) override {}
  const GridDensity* grid() const override { return &m_; }

 private:
  GridDensity m_;
};

// mean-field law approximated by one large interacting cloud advanced in
// lockstep; its empirical measure is frozen within each step
class FrozenCloudOracle final : public MeanFieldOracle {
 public:
  FrozenCloudOracle(const DistributionSpec& init, int n_ref, uint64_t seed, const MeanFieldFunctional& F,
                    const ConfiningPotential& u, double sigma, Exec policy = Exec::parallel);
  MeasureRef measure() const override { return big_.measure(); }
  void advance(double dt) override;

 private:
  ParticleCloud big_;
  const MeanFieldFunctional* F_;
  const ConfiningPotential* u_;
  double sigma_;
  Exec policy_;
  uint64_t step_ = 0;
  std::vector<double> drift_buf_;
};

struct CoupledSystem {
  ParticleCloud interacting;
  ParticleCloud reference;  // same stream identities => shared Brownian increments
};

// identical_start: reference copies the interacting initial positions (zero
// initial gap); otherwise reference resamples independently from the same law
CoupledSystem make_coupled(const DistributionSpec& init, int n, uint64_t seed, bool identical_start = true);

// One Euler-Maruyama step; drift evaluated against the pre-step measure `law`
// for every particle, then positions committed in one pass. step_index feeds
// the counter-based noise.
void em_step(ParticleCloud& c, const MeasureRef& law, const MeanFieldFunctional& F,
             const ConfiningPotential& u, double sigma, double dt, uint64_t step_index, Exec policy,
             std::vector<double>& drift_buf);

// Commit phase alone, for callers that batch the mean-field drift across
// several clouds sharing one law: adds the confinement drift and the noise,
// throws on non-finite positions.
void em_commit(ParticleCloud& c, const double* mean_field_drift, const ConfiningPotential& u, double sigma,
               double dt, uint64_t step_index, Exec policy);

// interacting system: law is the cloud's own empirical measure
void em_step_interacting(ParticleCloud& c, const MeanFieldFunctional& F, const ConfiningPotential& u,
                         double sigma, double dt, uint64_t step_index, Exec policy,
                         std::vector<double>& drift_buf);

// (1/(4 sigma^2)) (1/n) sum_i |D_mF(emp, x^i) - D_mF(law, x^i)|^2
double drift_mismatch(const ParticleCloud& c, const MeasureRef& law, const MeanFieldFunctional& F,
                      double sigma, Exec policy = Exec::parallel);

// a-priori bound on sup_t E|X_t|^2 from the declared derivative bound and the
// confinement curvature (coercivity Gronwall estimate)
double moment_bound(const MeanFieldFunctional& F, const ConfiningPotential& u, double sigma, int d,
                    double moment2_at_0);

struct RunRow {
  double t = 0.0;
  int n = 0;
  uint64_t seed = 0;
  double gap_sq_per_particle = 0.0;
  double free_energy_per_particle = 0.0;  // single-replica proxy (noisy at small n)
  double moment2 = 0.0;
  double drift_mismatch = 0.0;
  double f_emp = 0.0;  // F(empirical) alone; not serialized
};

struct RunObservation {
  double t;
  uint64_t step;
  const ParticleCloud& interacting;
  const ParticleCloud& reference;
  const RunRow& row;
};

using Observer = std::function<void(const RunObservation&)>;

struct RunOptions {
  bool record_snapshots = false;  // keep interacting positions at save times (d=1)
  double snapshot_t_lo = 0.0;
  double snapshot_t_hi = std::numeric_limits<double>::infinity();
  std::vector<Observer> observers;
  GridSpec entropy_grid;  // reference grid for the entropy term of the proxy
};

struct RunReport {
  std::vector<RunRow> rows;
  bool partial = false;   // aborted early (divergence or observer failure)
  std::string flag;       // diagnostic for partial or soft warnings
  std::vector<double> snapshot_times;
  std::vector<std::vector<double>> snapshots;  // interacting x-positions per kept save
};

RunReport run_coupled(CoupledSystem& sys, const MeanFieldFunctional& F, const ConfiningPotential& u,
                      const SimParams& params, MeanFieldOracle& oracle, const RunOptions& opts = {});

void write_run_csv(const std::string& path, const std::vector<RunRow>& rows, bool append = false);

}  // namespace mfl
