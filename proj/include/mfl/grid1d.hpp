#pragma once
// Deterministic 1-D mean-field flow on a uniform grid over [-L, L]:
// cell-centered densities, the Gibbs map
//   Phi(m) ~ exp(-((2/sigma^2) dF/dm(m,.) + u))
// with its damped fixed-point solver, conservative finite-volume steps of
//   d/dt m = d/dx[ (D_mF(m,.) + (sigma^2/2) u') m ] + (sigma^2/2) m''
// under no-flux boundaries, and the free energy F(m) + (sigma^2/2) H(m|mu).

#include <cstdint>
#include <string>
#include <vector>

#include "mfl/functionals.hpp"
#include "mfl/measure.hpp"

namespace mfl {

struct GridSpec {
  double half_width = 8.0;
  int cells = 2048;
  double mass_floor = 1e-12;  // density threshold below which cells leave sup-norm diagnostics
};

class GridDensity {
 public:
  GridDensity() = default;
  GridDensity(GridSpec spec, std::vector<double> values);

  static GridDensity gaussian(const GridSpec& spec, double mean, double variance);
  static GridDensity uniform_on(const GridSpec& spec, double a, double b);
  // normalized exp(-u): the reference measure of the entropy term
  static GridDensity from_potential(const GridSpec& spec, const ConfiningPotential& u);

  const GridSpec& spec() const { return spec_; }
  int cells() const { return spec_.cells; }
  double h() const { return 2.0 * spec_.half_width / spec_.cells; }
  double center(int i) const { return -spec_.half_width + (i + 0.5) * h(); }
  const std::vector<double>& values() const { return v_; }
  double value(int i) const { return v_[i]; }
  void set_values(std::vector<double> v);

  double mass() const;  // integral of the density, should be 1
  // mass carried by cells with |center| > margin
  double tail_mass(double margin) const;
  double mean() const;
  double moment2() const;  // E |x|^2

  // clip negatives and rescale to unit mass; returns the clipped mass
  double normalize();

  // weighted measure view over cell centers; valid until the next mutation
  MeasureRef measure() const;

  // quantile via the piecewise-linear CDF (density constant on cells)
  double quantile(double p) const;

 private:
  void rebuild_cache() const;

  GridSpec spec_;
  std::vector<double> v_;
  mutable std::vector<double> centers_;
  mutable std::vector<double> weights_;
  mutable bool cache_ok_ = false;
};

GridDensity gibbs_map(const MeanFieldFunctional& F, const ConfiningPotential& u, double sigma,
                      const GridDensity& m);

struct FixedPointResult {
  GridDensity m_star;
  int iterations = 0;
  double last_change = 0.0;          // sup-norm change of the final sweep
  double foc_residual = 0.0;         // first-order-condition oscillation at m_star
  bool converged = false;
  std::vector<double> change_history;
};

FixedPointResult fixed_point_solve(const MeanFieldFunctional& F, const ConfiningPotential& u, double sigma,
                                   const GridSpec& spec, double damping = 0.5, double tol = 1e-13,
                                   int max_iter = 1000, const GridDensity* init = nullptr);

// oscillation (max - min over cells with density > mass_floor) of
// dF/dm(m,x) + (sigma^2/2) log m(x) + (sigma^2/2) u(x)
double foc_residual(const MeanFieldFunctional& F, const ConfiningPotential& u, double sigma,
                    const GridDensity& m);

// oscillation of v = -log(m / Phi(m)) over the retained bulk
double oscillation_of_v(const MeanFieldFunctional& F, const ConfiningPotential& u, double sigma,
                        const GridDensity& m);

enum class FpScheme {
  implicit_exponential,   // fully implicit, exponentially fitted flux (default)
  semi_implicit_upwind,   // diffusion implicit, drift explicit upwind
  explicit_upwind         // everything explicit; dt must satisfy the CFL bound
};

FpScheme fp_scheme_from_string(const std::string& s);

// One conservative finite-volume step; drift field frozen at the pre-step density.
void fokker_planck_step(GridDensity& m, const MeanFieldFunctional& F, const ConfiningPotential& u,
                        double sigma, double dt, FpScheme scheme = FpScheme::implicit_exponential);

struct FreeEnergyBreakdown {
  double total = 0.0;
  double interaction = 0.0;  // F(m)
  double entropy = 0.0;      // (sigma^2/2) H(m|mu)
};

FreeEnergyBreakdown free_energy_grid(const MeanFieldFunctional& F, const ConfiningPotential& u,
                                     double sigma, const GridDensity& m);

void write_density_csv(const std::string& path, const GridDensity& m);

}  // namespace mfl
