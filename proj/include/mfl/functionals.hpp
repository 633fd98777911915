#pragma once
// Mean-field functionals F: P(R^d) -> R with their first-variation
// derivatives, evaluated against discrete measures (clouds or grids):
//   linear derivative  dF/dm(m,x): R^d -> R, reported zero-mean under m
//   intrinsic derivative D_mF(m,x) = grad_x dF/dm(m,x): R^d -> R^d
// plus the confining potential u that closes the drift
//   b(m,x) = D_mF(m,x) + (sigma^2/2) grad u(x).

#include <algorithm>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "mfl/kernels.hpp"
#include "mfl/measure.hpp"

namespace mfl {

// ---- Confining potential (quadratic family) ------------------------------

struct ConfiningPotential {
  double curvature = 1.0;  // u(x) = curvature/2 |x|^2; curvature 0 allowed for test-only flat drift

  double eval(const double* x, int d) const {
    double s = 0.0;
    for (int k = 0; k < d; ++k) s += x[k] * x[k];
    return 0.5 * curvature * s;
  }
  double grad(double xk) const { return curvature * xk; }
  void grad(const double* x, int d, double* out) const {
    for (int k = 0; k < d; ++k) out[k] = curvature * x[k];
  }
  double hess_low() const { return curvature; }
  double hess_high() const { return curvature; }
};

// ---- Functional interface -------------------------------------------------

class MeanFieldFunctional {
 public:
  virtual ~MeanFieldFunctional() = default;

  virtual std::string_view name() const = 0;
  virtual int dim() const = 0;

  virtual double eval(const MeasureRef& m) const = 0;
  // dF/dm before the zero-mean normalization (additive constants drop out of
  // every downstream use except the FOC display, which normalizes lazily)
  virtual double linear_derivative_raw(const MeasureRef& m, const double* x) const = 0;
  virtual void intrinsic_derivative(const MeasureRef& m, const double* x, double* out) const = 0;

  // declared sup over reachable (m, x) of |dF/dm| (raw version)
  virtual double linear_derivative_bound() const = 0;

  // batched D_mF at npts evaluation points (family may hoist shared work)
  virtual void dmf_batch(const MeasureRef& m, const double* xs, int npts, double* out,
                         Exec policy = Exec::parallel) const;
  // batched raw dF/dm at npts evaluation points
  virtual void dfdm_batch(const MeasureRef& m, const double* xs, int npts, double* out,
                          Exec policy = Exec::parallel) const;

  // optional second-order hook: d^2F/dm^2(m, x, x'), raw version
  virtual bool has_second_order() const { return false; }
  virtual double linear_second_raw(const MeasureRef&, const double*, const double*) const;
};

// weighted measures must carry total mass 1 (uniform ones do by construction)
void check_normalized(const MeasureRef& m, const char* who);

double eval_F(const MeanFieldFunctional& F, const MeasureRef& m);
// zero-mean version: dF/dm(m,x) - int dF/dm(m,y) m(dy)
double linear_derivative(const MeanFieldFunctional& F, const MeasureRef& m, const double* x);
// gradient of the lifted map x -> n F(emp(x)) in the coordinates of particle i;
// coincides with D_mF(emp, x^i)
void finite_particle_gradient(const MeanFieldFunctional& F, const MeasureRef& emp, int i, double* out);

// ---- Concrete families ----------------------------------------------------

class ZeroFunctional final : public MeanFieldFunctional {
 public:
  explicit ZeroFunctional(int d = 1) : d_(d) {}
  std::string_view name() const override { return "zero"; }
  int dim() const override { return d_; }
  double eval(const MeasureRef& m) const override;
  double linear_derivative_raw(const MeasureRef&, const double*) const override { return 0.0; }
  void intrinsic_derivative(const MeasureRef&, const double*, double* out) const override {
    for (int k = 0; k < d_; ++k) out[k] = 0.0;
  }
  double linear_derivative_bound() const override { return 0.0; }

 private:
  int d_;
};

// F(m) = g(int phi dm) with g(y) = g_scale |y - target|^2 and
// phi_k(x) = tanh(w_k . x + b_k), k < d' (convex composite of bounded features)
class CompositeExpectation final : public MeanFieldFunctional {
 public:
  struct Feature {
    std::vector<double> w;  // length d
    double b = 0.0;
  };

  CompositeExpectation(int d, std::vector<Feature> features, double g_scale, std::vector<double> target);
  // d=1 convenience: one feature tanh(x), scalar target
  static CompositeExpectation default_1d(double g_scale = 0.5, double target = 0.5);

  std::string_view name() const override { return "composite_expectation"; }
  int dim() const override { return d_; }
  double eval(const MeasureRef& m) const override;
  double linear_derivative_raw(const MeasureRef& m, const double* x) const override;
  void intrinsic_derivative(const MeasureRef& m, const double* x, double* out) const override;
  double linear_derivative_bound() const override;
  void dmf_batch(const MeasureRef& m, const double* xs, int npts, double* out, Exec policy) const override;
  void dfdm_batch(const MeasureRef& m, const double* xs, int npts, double* out, Exec policy) const override;
  bool has_second_order() const override { return true; }
  double linear_second_raw(const MeasureRef& m, const double* x, const double* xp) const override;

  int feature_count() const { return static_cast<int>(features_.size()); }
  // int phi dm, length d'
  std::vector<double> feature_mean(const MeasureRef& m) const;

 private:
  void phi(const double* x, double* out) const;        // d' values
  void grad_g(const double* y, double* out) const;     // d' values

  int d_;
  std::vector<Feature> features_;
  double g_scale_;
  std::vector<double> target_;
};

// F(m) = 1/2 int int w(x-y) m(dy) m(dx), Gaussian kernel w(z) = amp exp(-|z|^2 / (2 len^2))
class PairwiseInteraction final : public MeanFieldFunctional {
 public:
  explicit PairwiseInteraction(int d = 1, double amp = 1.0, double len = 1.0);

  std::string_view name() const override { return "pairwise_interaction"; }
  int dim() const override { return d_; }
  double eval(const MeasureRef& m) const override;
  double linear_derivative_raw(const MeasureRef& m, const double* x) const override;
  void intrinsic_derivative(const MeasureRef& m, const double* x, double* out) const override;
  double linear_derivative_bound() const override { return amp_; }
  void dmf_batch(const MeasureRef& m, const double* xs, int npts, double* out, Exec policy) const override;
  bool has_second_order() const override { return true; }
  double linear_second_raw(const MeasureRef&, const double* x, const double* xp) const override {
    return kernel(x, xp);
  }

  double kernel(const double* x, const double* y) const;
  void kernel_grad(const double* x, const double* y, double* out) const;  // grad_x w(x-y)

 private:
  int d_;
  double amp_, len_;
};

// Two-layer-network empirical loss over a fixed dataset {(z_k, f_k)}:
//   F(m) = sum_k ( f_k - E^m[ trunc(C) tanh(A . z_k + B) ] )^2
// with particle x = (c, a, b) in R^{1+dz+1} and trunc(c) = L tanh(c/L).
class TwoLayerNetLoss final : public MeanFieldFunctional {
 public:
  TwoLayerNetLoss(std::vector<std::vector<double>> zs, std::vector<double> fs, double trunc = 5.0);
  // default tiny regression task on 5 points in dz=1
  static TwoLayerNetLoss default_task(double trunc = 5.0);

  std::string_view name() const override { return "two_layer_net_loss"; }
  int dim() const override { return dz_ + 2; }
  double eval(const MeasureRef& m) const override;
  double linear_derivative_raw(const MeasureRef& m, const double* x) const override;
  void intrinsic_derivative(const MeasureRef& m, const double* x, double* out) const override;
  double linear_derivative_bound() const override;
  void dmf_batch(const MeasureRef& m, const double* xs, int npts, double* out, Exec policy) const override;
  void dfdm_batch(const MeasureRef& m, const double* xs, int npts, double* out, Exec policy) const override;
  bool has_second_order() const override { return true; }
  double linear_second_raw(const MeasureRef& m, const double* x, const double* xp) const override;

 private:
  // neuron output trunc(c) tanh(a . z_k + b) and its x-gradient
  double neuron(const double* x, int k) const;
  void neuron_grad(const double* x, int k, double* out) const;
  // residuals r_k = f_k - E^m[neuron_k]
  std::vector<double> residuals(const MeasureRef& m) const;

  int dz_;
  std::vector<std::vector<double>> zs_;
  std::vector<double> fs_;
  double trunc_;
};

// test hook: wraps a functional and flips the sign of D_mF, leaving the rest
// intact, so validation must catch the inconsistency by name
class FlippedIntrinsicSign final : public MeanFieldFunctional {
 public:
  explicit FlippedIntrinsicSign(std::shared_ptr<const MeanFieldFunctional> base) : base_(std::move(base)) {}
  std::string_view name() const override { return "flipped_intrinsic_sign"; }
  int dim() const override { return base_->dim(); }
  double eval(const MeasureRef& m) const override { return base_->eval(m); }
  double linear_derivative_raw(const MeasureRef& m, const double* x) const override {
    return base_->linear_derivative_raw(m, x);
  }
  void intrinsic_derivative(const MeasureRef& m, const double* x, double* out) const override;
  double linear_derivative_bound() const override { return base_->linear_derivative_bound(); }

 private:
  std::shared_ptr<const MeanFieldFunctional> base_;
};

// ---- Derivative validation ------------------------------------------------

struct DerivativeCheck {
  std::string name;      // e.g. "composite_expectation.intrinsic_vs_linear"
  double max_rel_err = 0.0;
  double tol = 1e-4;
  bool pass = true;
};

struct DerivativeReport {
  std::vector<DerivativeCheck> checks;
  bool all_pass() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
  double worst() const {
    double w = 0.0;
    for (const auto& c : checks) w = std::max(w, c.max_rel_err);
    return w;
  }
};

// Cross-checks every derivative against central finite differences on random
// bounded probes (clouds of several sizes plus weighted supports).
DerivativeReport validate_derivatives(const MeanFieldFunctional& F, uint64_t seed = 1, double tol = 1e-4);

}  // namespace mfl
