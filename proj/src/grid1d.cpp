#include "mfl/grid1d.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace mfl {

namespace {

// B(w) = w / (e^w - 1), the exponential-fitting weight; stable for all w
double bernoulli(double w) {
  const double aw = std::abs(w);
  if (aw < 1e-5) return 1.0 - 0.5 * w + w * w / 12.0;
  if (w > 0.0) return w * std::exp(-w) / (-std::expm1(-w));
  return w / std::expm1(w);
}

// Thomas solve of a tridiagonal system; diag/upper/lower are overwritten.
void solve_tridiag(std::vector<double>& lower, std::vector<double>& diag, std::vector<double>& upper,
                   std::vector<double>& rhs) {
  const int n = static_cast<int>(diag.size());
  for (int i = 1; i < n; ++i) {
    const double w = lower[i] / diag[i - 1];
    diag[i] -= w * upper[i - 1];
    rhs[i] -= w * rhs[i - 1];
  }
  rhs[n - 1] /= diag[n - 1];
  for (int i = n - 2; i >= 0; --i) rhs[i] = (rhs[i] - upper[i] * rhs[i + 1]) / diag[i];
}

void check_spec(const GridSpec& spec) {
  if (spec.cells < 8) throw std::invalid_argument("grid: needs at least 8 cells");
  if (spec.half_width <= 0.0) throw std::invalid_argument("grid: half_width must be positive");
}

// potential of the drift: Psi(x) = dF/dm(m,x) + (sigma^2/2) u(x), on all cells
std::vector<double> drift_potential(const MeanFieldFunctional& F, const ConfiningPotential& u,
                                    double sigma, const GridDensity& m) {
  if (F.dim() != 1) throw std::invalid_argument("grid flow: functional must be one-dimensional");
  const int M = m.cells();
  std::vector<double> psi(M);
  MeasureRef mu = m.measure();
  // centers are the first M entries of the measure view's points
  F.dfdm_batch(mu, mu.pts, M, psi.data(), Exec::serial);
  for (int i = 0; i < M; ++i) {
    const double x = m.center(i);
    psi[i] += 0.5 * sigma * sigma * u.eval(&x, 1);
  }
  return psi;
}

}  // namespace

// ---- GridDensity -----------------------------------------------------------

GridDensity::GridDensity(GridSpec spec, std::vector<double> values) : spec_(spec), v_(std::move(values)) {
  check_spec(spec_);
  if (static_cast<int>(v_.size()) != spec_.cells)
    throw std::invalid_argument("grid: value count does not match cell count");
  normalize();
}

GridDensity GridDensity::gaussian(const GridSpec& spec, double mean, double variance) {
  check_spec(spec);
  if (variance <= 0.0) throw std::invalid_argument("grid: gaussian variance must be positive");
  std::vector<double> v(spec.cells);
  const double h = 2.0 * spec.half_width / spec.cells;
  for (int i = 0; i < spec.cells; ++i) {
    const double x = -spec.half_width + (i + 0.5) * h;
    v[i] = std::exp(-0.5 * (x - mean) * (x - mean) / variance);
  }
  return GridDensity(spec, std::move(v));
}

GridDensity GridDensity::uniform_on(const GridSpec& spec, double a, double b) {
  check_spec(spec);
  if (!(a < b)) throw std::invalid_argument("grid: uniform needs a < b");
  std::vector<double> v(spec.cells, 0.0);
  const double h = 2.0 * spec.half_width / spec.cells;
  for (int i = 0; i < spec.cells; ++i) {
    const double x = -spec.half_width + (i + 0.5) * h;
    if (x >= a && x <= b) v[i] = 1.0;
  }
  return GridDensity(spec, std::move(v));
}

GridDensity GridDensity::from_potential(const GridSpec& spec, const ConfiningPotential& u) {
  check_spec(spec);
  std::vector<double> v(spec.cells);
  const double h = 2.0 * spec.half_width / spec.cells;
  for (int i = 0; i < spec.cells; ++i) {
    const double x = -spec.half_width + (i + 0.5) * h;
    v[i] = std::exp(-u.eval(&x, 1));
  }
  return GridDensity(spec, std::move(v));
}

void GridDensity::set_values(std::vector<double> v) {
  if (static_cast<int>(v.size()) != spec_.cells)
    throw std::invalid_argument("grid: value count does not match cell count");
  v_ = std::move(v);
  cache_ok_ = false;
  normalize();
}

double GridDensity::mass() const {
  double s = 0.0;
  for (double x : v_) s += x;
  return s * h();
}

double GridDensity::tail_mass(double margin) const {
  double s = 0.0;
  for (int i = 0; i < spec_.cells; ++i)
    if (std::abs(center(i)) > margin) s += v_[i];
  return s * h();
}

double GridDensity::mean() const {
  double s = 0.0;
  for (int i = 0; i < spec_.cells; ++i) s += center(i) * v_[i];
  return s * h();
}

double GridDensity::moment2() const {
  double s = 0.0;
  for (int i = 0; i < spec_.cells; ++i) s += center(i) * center(i) * v_[i];
  return s * h();
}

double GridDensity::normalize() {
  double clipped = 0.0, total = 0.0;
  for (double& x : v_) {
    if (x < 0.0) {
      clipped -= x;
      x = 0.0;
    }
    total += x;
  }
  total *= h();
  if (total <= 0.0) throw std::runtime_error("grid: density lost all mass");
  for (double& x : v_) x /= total;
  cache_ok_ = false;
  return clipped * h();
}

void GridDensity::rebuild_cache() const {
  centers_.resize(spec_.cells);
  weights_.resize(spec_.cells);
  for (int i = 0; i < spec_.cells; ++i) {
    centers_[i] = center(i);
    weights_[i] = v_[i] * h();
  }
  cache_ok_ = true;
}

MeasureRef GridDensity::measure() const {
  if (!cache_ok_) rebuild_cache();
  return MeasureRef{centers_.data(), weights_.data(), spec_.cells, 1, -1};
}

double GridDensity::quantile(double p) const {
  if (p <= 0.0) return -spec_.half_width;
  if (p >= 1.0) return spec_.half_width;
  double acc = 0.0;
  const double hh = h();
  for (int i = 0; i < spec_.cells; ++i) {
    const double cell = v_[i] * hh;
    if (acc + cell >= p) {
      const double frac = cell > 0.0 ? (p - acc) / cell : 0.5;
      return -spec_.half_width + (i + frac) * hh;
    }
    acc += cell;
  }
  return spec_.half_width;
}

// ---- Gibbs map and fixed point ----------------------------------------------

GridDensity gibbs_map(const MeanFieldFunctional& F, const ConfiningPotential& u, double sigma,
                      const GridDensity& m) {
  if (sigma <= 0.0) throw std::invalid_argument("gibbs_map: sigma must be positive");
  require_dim(m.measure(), F.dim(), "gibbs_map");
  const int M = m.cells();
  std::vector<double> expo(M);
  MeasureRef mm = m.measure();
  F.dfdm_batch(mm, mm.pts, M, expo.data(), Exec::serial);
  const double beta = 2.0 / (sigma * sigma);
  double emin = std::numeric_limits<double>::infinity();
  for (int i = 0; i < M; ++i) {
    const double x = m.center(i);
    expo[i] = beta * expo[i] + u.eval(&x, 1);
    emin = std::min(emin, expo[i]);
  }
  std::vector<double> v(M);
  for (int i = 0; i < M; ++i) v[i] = std::exp(-(expo[i] - emin));
  return GridDensity(m.spec(), std::move(v));
}

FixedPointResult fixed_point_solve(const MeanFieldFunctional& F, const ConfiningPotential& u, double sigma,
                                   const GridSpec& spec, double damping, double tol, int max_iter,
                                   const GridDensity* init) {
  if (damping <= 0.0 || damping > 1.0) throw std::invalid_argument("fixed_point: damping in (0, 1]");
  FixedPointResult res;
  GridDensity m = init ? *init : GridDensity::from_potential(spec, u);
  for (int it = 0; it < max_iter; ++it) {
    const GridDensity phi = gibbs_map(F, u, sigma, m);
    double change = 0.0;
    std::vector<double> next(m.cells());
    for (int i = 0; i < m.cells(); ++i) {
      next[i] = (1.0 - damping) * m.value(i) + damping * phi.value(i);
      change = std::max(change, std::abs(next[i] - m.value(i)));
    }
    m.set_values(std::move(next));
    res.change_history.push_back(change);
    res.iterations = it + 1;
    res.last_change = change;
    if (change < tol) {
      res.converged = true;
      break;
    }
  }
  res.foc_residual = foc_residual(F, u, sigma, m);
  res.m_star = std::move(m);
  return res;
}

double foc_residual(const MeanFieldFunctional& F, const ConfiningPotential& u, double sigma,
                    const GridDensity& m) {
  const int M = m.cells();
  std::vector<double> dfdm(M);
  MeasureRef mm = m.measure();
  F.dfdm_batch(mm, mm.pts, M, dfdm.data(), Exec::serial);
  const double half_s2 = 0.5 * sigma * sigma;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  int retained = 0;
  for (int i = 0; i < M; ++i) {
    if (m.value(i) <= m.spec().mass_floor) continue;
    const double x = m.center(i);
    const double r = dfdm[i] + half_s2 * std::log(m.value(i)) + half_s2 * u.eval(&x, 1);
    lo = std::min(lo, r);
    hi = std::max(hi, r);
    ++retained;
  }
  if (retained == 0) throw std::runtime_error("foc_residual: all cells below the mass floor");
  return hi - lo;
}

double oscillation_of_v(const MeanFieldFunctional& F, const ConfiningPotential& u, double sigma,
                        const GridDensity& m) {
  const GridDensity phi = gibbs_map(F, u, sigma, m);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  int retained = 0;
  for (int i = 0; i < m.cells(); ++i) {
    if (m.value(i) <= m.spec().mass_floor || phi.value(i) <= 0.0) continue;
    const double v = -(std::log(m.value(i)) - std::log(phi.value(i)));
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    ++retained;
  }
  if (retained == 0) throw std::runtime_error("oscillation_of_v: all cells below the mass floor");
  return hi - lo;
}

// ---- Fokker-Planck steps -----------------------------------------------------

FpScheme fp_scheme_from_string(const std::string& s) {
  if (s == "implicit_exponential") return FpScheme::implicit_exponential;
  if (s == "semi_implicit_upwind") return FpScheme::semi_implicit_upwind;
  if (s == "explicit_upwind") return FpScheme::explicit_upwind;
  throw std::invalid_argument("unknown Fokker-Planck scheme: " + s);
}

void fokker_planck_step(GridDensity& m, const MeanFieldFunctional& F, const ConfiningPotential& u,
                        double sigma, double dt, FpScheme scheme) {
  if (dt <= 0.0) throw std::invalid_argument("fokker_planck_step: dt must be positive");
  if (sigma <= 0.0) throw std::invalid_argument("fokker_planck_step: sigma must be positive");
  const int M = m.cells();
  const double h = m.h();
  const double D = 0.5 * sigma * sigma;
  const std::vector<double> psi = drift_potential(F, u, sigma, m);

  // edge drift b_e = (Psi_{i+1} - Psi_i)/h, so the discrete flux ratio matches
  // the Gibbs density exactly in the exponential scheme
  std::vector<double> b(M - 1);
  for (int e = 0; e < M - 1; ++e) b[e] = (psi[e + 1] - psi[e]) / h;

  const std::vector<double>& v = m.values();
  std::vector<double> next(M);

  switch (scheme) {
    case FpScheme::implicit_exponential: {
      // flux J_e = (D/h) [B(-w) m_{i+1} - B(w) m_i], w = b_e h / D, all implicit
      const double lam = dt * D / (h * h);
      std::vector<double> lower(M, 0.0), diag(M, 1.0), upper(M, 0.0), rhs(v);
      for (int e = 0; e < M - 1; ++e) {
        const double w = b[e] * h / D;
        const double Bp = bernoulli(w), Bm = bernoulli(-w);
        // cell e loses through edge e, cell e+1 gains (and vice versa)
        diag[e] += lam * Bp;
        upper[e] -= lam * Bm;
        diag[e + 1] += lam * Bm;
        lower[e + 1] -= lam * Bp;
      }
      solve_tridiag(lower, diag, upper, rhs);
      next = std::move(rhs);
      break;
    }
    case FpScheme::semi_implicit_upwind:
    case FpScheme::explicit_upwind: {
      // drift flux J_e = b_e * donor density; donor is the right cell when b_e > 0
      // (particles move with velocity -b)
      double bmax = 0.0;
      for (int e = 0; e < M - 1; ++e) bmax = std::max(bmax, std::abs(b[e]));
      if (scheme == FpScheme::explicit_upwind) {
        const double cfl = std::min(h * h / (sigma * sigma), bmax > 0.0 ? h / (2.0 * bmax)
                                                                        : std::numeric_limits<double>::infinity());
        if (dt > cfl)
          throw std::invalid_argument("fokker_planck_step: CFL violation in explicit mode (dt " +
                                      std::to_string(dt) + " > bound " + std::to_string(cfl) + ")");
      }
      std::vector<double> jdrift(M + 1, 0.0);  // edge fluxes incl. zero boundary fluxes
      for (int e = 0; e < M - 1; ++e) jdrift[e + 1] = b[e] * (b[e] > 0.0 ? v[e + 1] : v[e]);
      if (scheme == FpScheme::explicit_upwind) {
        for (int i = 0; i < M; ++i) {
          const double lap_flux_r = i + 1 < M ? D * (v[i + 1] - v[i]) / h : 0.0;
          const double lap_flux_l = i > 0 ? D * (v[i] - v[i - 1]) / h : 0.0;
          next[i] = v[i] + dt / h * (jdrift[i + 1] - jdrift[i] + lap_flux_r - lap_flux_l);
        }
      } else {
        // implicit diffusion, explicit drift
        const double lam = dt * D / (h * h);
        std::vector<double> lower(M, 0.0), diag(M, 1.0), upper(M, 0.0), rhs(M);
        for (int i = 0; i < M; ++i) {
          rhs[i] = v[i] + dt / h * (jdrift[i + 1] - jdrift[i]);
          if (i + 1 < M) {
            diag[i] += lam;
            upper[i] -= lam;
          }
          if (i > 0) {
            diag[i] += lam;
            lower[i] -= lam;
          }
        }
        solve_tridiag(lower, diag, upper, rhs);
        next = std::move(rhs);
      }
      break;
    }
  }

  m.set_values(std::move(next));
  if (std::abs(m.mass() - 1.0) > 1e-12) throw std::runtime_error("fokker_planck_step: mass drifted");
}

// ---- Free energy --------------------------------------------------------------

FreeEnergyBreakdown free_energy_grid(const MeanFieldFunctional& F, const ConfiningPotential& u,
                                     double sigma, const GridDensity& m) {
  FreeEnergyBreakdown out;
  out.interaction = eval_F(F, m.measure());
  const GridDensity mu = GridDensity::from_potential(m.spec(), u);
  double hrel = 0.0;
  for (int i = 0; i < m.cells(); ++i) {
    const double p = m.value(i);
    if (p <= 0.0) continue;
    hrel += p * std::log(p / mu.value(i));
  }
  out.entropy = 0.5 * sigma * sigma * hrel * m.h();
  out.total = out.interaction + out.entropy;
  return out;
}

void write_density_csv(const std::string& path, const GridDensity& m) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  std::fprintf(f, "cell_center,density\n");
  for (int i = 0; i < m.cells(); ++i) std::fprintf(f, "%.17g,%.17g\n", m.center(i), m.value(i));
  std::fclose(f);
}

}  // namespace mfl
