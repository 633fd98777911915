#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "mfl/dynamics.hpp"
#include "mfl/functionals.hpp"
#include "mfl/grid1d.hpp"

using namespace mfl;

namespace {

GridSpec default_grid() {
  GridSpec s;
  s.half_width = 8.0;
  s.cells = 1024;
  return s;
}

double mean_of(const ParticleCloud& c) {
  double s = 0.0;
  for (int i = 0; i < c.size(); ++i) s += c.point(i)[0];
  return s / c.size();
}

}  // namespace

TEST_CASE("save-time grids") {
  const std::vector<double> a = make_save_times(2.0, 0.5);
  REQUIRE(a.size() == 5);
  CHECK(a.front() == 0.0);
  CHECK(a.back() == 2.0);
  CHECK(a[2] == doctest::Approx(1.0));

  // the horizon is always included
  const std::vector<double> b = make_save_times(1.0, 0.3);
  CHECK(b.back() == doctest::Approx(1.0));
  CHECK_THROWS(make_save_times(1.0, 0.0));
}

TEST_CASE("pure confinement dynamics contracts the particle mean at rate 1/2") {
  const ZeroFunctional F(1);
  ConfiningPotential u;
  const int n = 10000;
  // essentially a point mass at 1 so initial sampling noise cannot leak in
  ParticleCloud c = sample_cloud(DistributionSpec::gaussian(1.0, 1e-24), n, 321);
  std::vector<double> buf;
  const double dt = 1e-3;
  for (uint64_t k = 0; k < 1000; ++k) em_step_interacting(c, F, u, 1.0, dt, k, Exec::parallel, buf);
  // dX = -(1/2) X dt + dW: mean e^{-1/2}, var 1 - e^{-1}
  const double var = 1.0 - std::exp(-1.0);
  const double se = std::sqrt(var / n);
  CHECK(std::abs(mean_of(c) - std::exp(-0.5)) < 3.5 * se + 2e-3);
}

TEST_CASE("trajectories are a pure function of config and seed") {
  const CompositeExpectation F = CompositeExpectation::default_1d();
  ConfiningPotential u;
  const DistributionSpec init = DistributionSpec::gaussian(1.0, 1.0);
  auto run_once = [&](Exec policy) {
    ParticleCloud c = sample_cloud(init, 256, 777);
    std::vector<double> buf;
    for (uint64_t k = 0; k < 100; ++k) em_step_interacting(c, F, u, 1.0, 1e-3, k, policy, buf);
    return c;
  };
  const ParticleCloud a = run_once(Exec::parallel);
  const ParticleCloud b = run_once(Exec::parallel);
  const ParticleCloud c = run_once(Exec::serial);
  for (int i = 0; i < 256; ++i) {
    REQUIRE(a.point(i)[0] == b.point(i)[0]);  // reproducible
    REQUIRE(a.point(i)[0] == c.point(i)[0]);  // and policy-independent, bit for bit
  }
}

TEST_CASE("batched drift plus commit equals the one-call step") {
  const CompositeExpectation F = CompositeExpectation::default_1d();
  ConfiningPotential u;
  const GridDensity law = GridDensity::gaussian(default_grid(), 0.5, 1.0);

  ParticleCloud one = sample_cloud(DistributionSpec::gaussian(0.0, 1.0), 64, 5);
  ParticleCloud two = one;
  std::vector<double> buf;
  em_step(one, law.measure(), F, u, 1.0, 1e-3, 7, Exec::parallel, buf);

  std::vector<double> drift(64);
  F.dmf_batch(law.measure(), two.data(), 64, drift.data(), Exec::parallel);
  em_commit(two, drift.data(), u, 1.0, 1e-3, 7, Exec::parallel);

  for (int i = 0; i < 64; ++i) REQUIRE(one.point(i)[0] == two.point(i)[0]);
}

TEST_CASE("synchronously coupled systems with no interaction never separate") {
  const ZeroFunctional F(1);
  ConfiningPotential u;
  CoupledSystem sys = make_coupled(DistributionSpec::gaussian(1.0, 1.0), 128, 99, true);
  StationaryOracle oracle(GridDensity::from_potential(default_grid(), u));

  SimParams p;
  p.sigma = 1.0;
  p.dt = 1e-3;
  p.t_end = 0.5;
  p.save_times = make_save_times(0.5, 0.1);
  p.seed = 99;
  RunOptions opts;
  opts.entropy_grid = default_grid();
  const RunReport rep = run_coupled(sys, F, u, p, oracle, opts);
  REQUIRE(!rep.partial);
  REQUIRE(rep.rows.size() == 6);
  for (const auto& r : rep.rows) {
    CHECK(r.gap_sq_per_particle == 0.0);
    CHECK(r.drift_mismatch == 0.0);
    CHECK(r.n == 128);
    CHECK(r.seed == 99);
  }
}

TEST_CASE("independent reference starts produce a bounded, nonzero gap") {
  const ZeroFunctional F(1);
  ConfiningPotential u;
  CoupledSystem sys = make_coupled(DistributionSpec::gaussian(1.0, 1.0), 128, 99, false);
  bool differs = false;
  for (int i = 0; i < 128; ++i) differs |= (sys.interacting.point(i)[0] != sys.reference.point(i)[0]);
  CHECK(differs);
  // the same stream identities still pair the Brownian increments
  CHECK(sys.interacting.stream(5) == sys.reference.stream(5));
}

TEST_CASE("interacting run stays within the a-priori second-moment bound") {
  const CompositeExpectation F = CompositeExpectation::default_1d();
  ConfiningPotential u;
  CoupledSystem sys = make_coupled(DistributionSpec::gaussian(1.0, 1.0), 256, 17, true);
  GridFlowOracle oracle(GridDensity::gaussian(default_grid(), 1.0, 1.0), F, u, 1.0);

  SimParams p;
  p.sigma = 1.0;
  p.dt = 1e-3;
  p.t_end = 2.0;
  p.save_times = make_save_times(2.0, 0.25);
  RunOptions opts;
  opts.entropy_grid = default_grid();
  const RunReport rep = run_coupled(sys, F, u, p, oracle, opts);
  REQUIRE(!rep.partial);

  const double m0 = rep.rows.front().moment2;
  const double bound = moment_bound(F, u, 1.0, 1, m0);
  CHECK(bound > 0.0);
  CHECK(std::isfinite(bound));
  for (const auto& r : rep.rows) {
    CHECK(r.moment2 <= bound * 1.05);
    CHECK(std::isfinite(r.free_energy_per_particle));
    CHECK(r.drift_mismatch >= 0.0);
  }
}

TEST_CASE("snapshots are recorded inside the requested window only") {
  const ZeroFunctional F(1);
  ConfiningPotential u;
  CoupledSystem sys = make_coupled(DistributionSpec::gaussian(0.0, 1.0), 32, 3, true);
  StationaryOracle oracle(GridDensity::from_potential(default_grid(), u));
  SimParams p;
  p.dt = 1e-3;
  p.t_end = 1.0;
  p.save_times = make_save_times(1.0, 0.25);
  RunOptions opts;
  opts.entropy_grid = default_grid();
  opts.record_snapshots = true;
  opts.snapshot_t_lo = 0.5;
  opts.snapshot_t_hi = 1.0;
  const RunReport rep = run_coupled(sys, F, u, p, oracle, opts);
  REQUIRE(rep.snapshot_times.size() == 3);  // 0.5, 0.75, 1.0
  CHECK(rep.snapshot_times.front() == doctest::Approx(0.5));
  CHECK(rep.snapshot_times.back() == doctest::Approx(1.0));
  for (const auto& snap : rep.snapshots) CHECK(snap.size() == 32);
}

TEST_CASE("a diverging run is reported as partial instead of crashing") {
  const ZeroFunctional F(1);
  ConfiningPotential u;
  CoupledSystem sys = make_coupled(DistributionSpec::gaussian(1.0, 1.0), 8, 4, true);
  StationaryOracle oracle(GridDensity::from_potential(default_grid(), u));
  SimParams p;
  p.dt = 1e3;  // wildly unstable for the explicit particle update
  p.t_end = 1e3 * 400;
  p.save_times = {0.0};
  RunOptions opts;
  opts.entropy_grid = default_grid();
  const RunReport rep = run_coupled(sys, F, u, p, oracle, opts);
  CHECK(rep.partial);
  CHECK(!rep.flag.empty());
}

TEST_CASE("observer failures abort the run gracefully") {
  const ZeroFunctional F(1);
  ConfiningPotential u;
  CoupledSystem sys = make_coupled(DistributionSpec::gaussian(0.0, 1.0), 16, 6, true);
  StationaryOracle oracle(GridDensity::from_potential(default_grid(), u));
  SimParams p;
  p.dt = 1e-3;
  p.t_end = 0.2;
  p.save_times = make_save_times(0.2, 0.05);
  RunOptions opts;
  opts.entropy_grid = default_grid();
  int calls = 0;
  opts.observers.push_back([&](const RunObservation& obs) {
    ++calls;
    if (obs.t >= 0.1) throw std::runtime_error("stop requested");
  });
  const RunReport rep = run_coupled(sys, F, u, p, oracle, opts);
  CHECK(rep.partial);
  CHECK(rep.flag == "stop requested");
  CHECK(calls == 3);
}

TEST_CASE("run csv round-trips the declared header") {
  std::vector<RunRow> rows(2);
  rows[0].t = 0.0;
  rows[0].n = 4;
  rows[0].seed = 9;
  rows[1].t = 0.5;
  rows[1].n = 4;
  rows[1].seed = 9;
  const std::string path = "test_dynamics_tmp.csv";
  write_run_csv(path, rows);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "t,n,seed,gap_sq_per_particle,free_energy_per_particle,moment2,drift_mismatch");
  int body = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++body;
  CHECK(body == 2);
  in.close();
  std::remove(path.c_str());
}

TEST_CASE("frozen-cloud and grid oracles tell the same convergence story") {
  const CompositeExpectation F = CompositeExpectation::default_1d();
  ConfiningPotential u;
  const DistributionSpec init = DistributionSpec::gaussian(1.0, 1.0);
  const int n = 64, replicas = 8;
  const double t_end = 0.5;

  auto mean_stats = [&](bool frozen) {
    double gap = 0.0, mismatch = 0.0;
    for (int r = 0; r < replicas; ++r) {
      CoupledSystem sys = make_coupled(init, n, 1000 + r, true);
      SimParams p;
      p.dt = 1e-3;
      p.t_end = t_end;
      p.save_times = {t_end};
      RunOptions opts;
      opts.entropy_grid = default_grid();
      RunReport rep;
      if (frozen) {
        FrozenCloudOracle oracle(init, 50000, 555, F, u, 1.0);
        rep = run_coupled(sys, F, u, p, oracle, opts);
      } else {
        GridFlowOracle oracle(GridDensity::gaussian(default_grid(), 1.0, 1.0), F, u, 1.0);
        rep = run_coupled(sys, F, u, p, oracle, opts);
      }
      REQUIRE(!rep.partial);
      gap += rep.rows.back().gap_sq_per_particle;
      mismatch += rep.rows.back().drift_mismatch;
    }
    return std::pair<double, double>{gap / replicas, mismatch / replicas};
  };

  const auto [gap_grid, mis_grid] = mean_stats(false);
  const auto [gap_frozen, mis_frozen] = mean_stats(true);
  CHECK(gap_grid > 0.0);
  CHECK(gap_frozen > 0.0);
  // same Brownian increments on both sides: the only difference is the law
  CHECK(std::abs(gap_frozen - gap_grid) / gap_grid < 0.15);
  CHECK(std::abs(mis_frozen - mis_grid) / mis_grid < 0.10);
}
