#include "mfl/functionals.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "mfl/rng.hpp"

namespace mfl {

namespace {

double sech2(double t) {
  const double c = std::cosh(t);
  return 1.0 / (c * c);
}

double dot(const double* a, const double* b, int d) {
  double s = 0.0;
  for (int k = 0; k < d; ++k) s += a[k] * b[k];
  return s;
}

}  // namespace

void check_normalized(const MeasureRef& m, const char* who) {
  if (m.rows <= 0 || (m.skip >= 0 && m.rows <= 1))
    throw std::invalid_argument(std::string(who) + ": empty measure");
  if (!m.wts) return;
  double s = 0.0;
  for (int i = 0; i < m.rows; ++i) s += m.wts[i];
  if (std::abs(s - 1.0) > 1e-12)
    throw std::invalid_argument(std::string(who) + ": measure not normalized (total mass " +
                                std::to_string(s) + ")");
}

void MeanFieldFunctional::dmf_batch(const MeasureRef& m, const double* xs, int npts, double* out,
                                    Exec policy) const {
  const int d = dim();
  parallel_for(policy, npts, [&](int i) { intrinsic_derivative(m, xs + static_cast<size_t>(i) * d, out + static_cast<size_t>(i) * d); });
}

void MeanFieldFunctional::dfdm_batch(const MeasureRef& m, const double* xs, int npts, double* out,
                                     Exec policy) const {
  const int d = dim();
  parallel_for(policy, npts,
               [&](int i) { out[i] = linear_derivative_raw(m, xs + static_cast<size_t>(i) * d); });
}

double MeanFieldFunctional::linear_second_raw(const MeasureRef&, const double*, const double*) const {
  throw std::logic_error(std::string(name()) + ": second-order derivative not provided");
}

double eval_F(const MeanFieldFunctional& F, const MeasureRef& m) {
  require_dim(m, F.dim(), "eval_F");
  check_normalized(m, "eval_F");
  return F.eval(m);
}

double linear_derivative(const MeanFieldFunctional& F, const MeasureRef& m, const double* x) {
  require_dim(m, F.dim(), "linear_derivative");
  check_normalized(m, "linear_derivative");
  const double raw = F.linear_derivative_raw(m, x);
  const double mean = integrate(m, [&](const double* y) { return F.linear_derivative_raw(m, y); });
  return raw - mean;
}

void finite_particle_gradient(const MeanFieldFunctional& F, const MeasureRef& emp, int i, double* out) {
  require_dim(emp, F.dim(), "finite_particle_gradient");
  if (emp.wts) throw std::invalid_argument("finite_particle_gradient: needs a uniform empirical measure");
  if (i < 0 || i >= emp.rows) throw std::invalid_argument("finite_particle_gradient: particle index out of range");
  F.intrinsic_derivative(emp, emp.point(i), out);
}

// ---- ZeroFunctional --------------------------------------------------------

double ZeroFunctional::eval(const MeasureRef& m) const {
  check_normalized(m, "zero.eval");
  return 0.0;
}

// ---- CompositeExpectation --------------------------------------------------

CompositeExpectation::CompositeExpectation(int d, std::vector<Feature> features, double g_scale,
                                           std::vector<double> target)
    : d_(d), features_(std::move(features)), g_scale_(g_scale), target_(std::move(target)) {
  if (features_.empty()) throw std::invalid_argument("composite: needs at least one feature");
  if (target_.size() != features_.size())
    throw std::invalid_argument("composite: target length must match feature count");
  for (const auto& f : features_)
    if (static_cast<int>(f.w.size()) != d_) throw std::invalid_argument("composite: feature weight length != d");
}

CompositeExpectation CompositeExpectation::default_1d(double g_scale, double target) {
  return CompositeExpectation(1, {Feature{{1.0}, 0.0}}, g_scale, {target});
}

void CompositeExpectation::phi(const double* x, double* out) const {
  for (size_t k = 0; k < features_.size(); ++k)
    out[k] = std::tanh(dot(features_[k].w.data(), x, d_) + features_[k].b);
}

void CompositeExpectation::grad_g(const double* y, double* out) const {
  for (size_t k = 0; k < features_.size(); ++k) out[k] = 2.0 * g_scale_ * (y[k] - target_[k]);
}

std::vector<double> CompositeExpectation::feature_mean(const MeasureRef& m) const {
  std::vector<double> y(features_.size(), 0.0), p(features_.size());
  for (int i = 0; i < m.rows; ++i) {
    if (m.skipped(i)) continue;
    phi(m.point(i), p.data());
    const double w = m.weight(i);
    for (size_t k = 0; k < y.size(); ++k) y[k] += w * p[k];
  }
  return y;
}

double CompositeExpectation::eval(const MeasureRef& m) const {
  check_normalized(m, "composite.eval");
  const auto y = feature_mean(m);
  double s = 0.0;
  for (size_t k = 0; k < y.size(); ++k) {
    const double e = y[k] - target_[k];
    s += e * e;
  }
  return g_scale_ * s;
}

double CompositeExpectation::linear_derivative_raw(const MeasureRef& m, const double* x) const {
  const auto y = feature_mean(m);
  std::vector<double> a(y.size()), p(y.size());
  grad_g(y.data(), a.data());
  phi(x, p.data());
  return dot(a.data(), p.data(), static_cast<int>(y.size()));
}

void CompositeExpectation::intrinsic_derivative(const MeasureRef& m, const double* x, double* out) const {
  const auto y = feature_mean(m);
  std::vector<double> a(y.size());
  grad_g(y.data(), a.data());
  for (int k = 0; k < d_; ++k) out[k] = 0.0;
  for (size_t j = 0; j < features_.size(); ++j) {
    const double s = a[j] * sech2(dot(features_[j].w.data(), x, d_) + features_[j].b);
    for (int k = 0; k < d_; ++k) out[k] += s * features_[j].w[k];
  }
}

double CompositeExpectation::linear_derivative_bound() const {
  double tmax = 0.0;
  for (double t : target_) tmax = std::max(tmax, std::abs(t));
  // |grad g| <= 2 g_scale (1 + max|target|) per feature, |phi| <= 1
  return 2.0 * g_scale_ * (1.0 + tmax) * static_cast<double>(features_.size());
}

void CompositeExpectation::dmf_batch(const MeasureRef& m, const double* xs, int npts, double* out,
                                     Exec policy) const {
  const auto y = feature_mean(m);  // shared across evaluation points
  std::vector<double> a(y.size());
  grad_g(y.data(), a.data());
  parallel_for(policy, npts, [&](int i) {
    const double* x = xs + static_cast<size_t>(i) * d_;
    double* o = out + static_cast<size_t>(i) * d_;
    for (int k = 0; k < d_; ++k) o[k] = 0.0;
    for (size_t j = 0; j < features_.size(); ++j) {
      const double s = a[j] * sech2(dot(features_[j].w.data(), x, d_) + features_[j].b);
      for (int k = 0; k < d_; ++k) o[k] += s * features_[j].w[k];
    }
  });
}

void CompositeExpectation::dfdm_batch(const MeasureRef& m, const double* xs, int npts, double* out,
                                      Exec policy) const {
  const auto y = feature_mean(m);
  std::vector<double> a(y.size());
  grad_g(y.data(), a.data());
  parallel_for(policy, npts, [&](int i) {
    const double* x = xs + static_cast<size_t>(i) * d_;
    double acc = 0.0;
    for (size_t j = 0; j < features_.size(); ++j)
      acc += a[j] * std::tanh(dot(features_[j].w.data(), x, d_) + features_[j].b);
    out[i] = acc;
  });
}

double CompositeExpectation::linear_second_raw(const MeasureRef&, const double* x, const double* xp) const {
  // grad^2 g = 2 g_scale I, so d2F/dm2 = 2 g_scale phi(x) . phi(x')
  std::vector<double> p(features_.size()), q(features_.size());
  phi(x, p.data());
  phi(xp, q.data());
  return 2.0 * g_scale_ * dot(p.data(), q.data(), static_cast<int>(features_.size()));
}

// ---- PairwiseInteraction ---------------------------------------------------

PairwiseInteraction::PairwiseInteraction(int d, double amp, double len) : d_(d), amp_(amp), len_(len) {
  if (len_ <= 0.0) throw std::invalid_argument("pairwise: kernel length must be positive");
}

double PairwiseInteraction::kernel(const double* x, const double* y) const {
  double s = 0.0;
  for (int k = 0; k < d_; ++k) {
    const double z = x[k] - y[k];
    s += z * z;
  }
  return amp_ * std::exp(-0.5 * s / (len_ * len_));
}

void PairwiseInteraction::kernel_grad(const double* x, const double* y, double* out) const {
  double s = 0.0;
  for (int k = 0; k < d_; ++k) {
    const double z = x[k] - y[k];
    s += z * z;
  }
  const double e = amp_ * std::exp(-0.5 * s / (len_ * len_)) / (len_ * len_);
  for (int k = 0; k < d_; ++k) out[k] = -(x[k] - y[k]) * e;
}

double PairwiseInteraction::eval(const MeasureRef& m) const {
  check_normalized(m, "pairwise.eval");
  // full double sum, diagonal included
  double acc = 0.0;
  for (int i = 0; i < m.rows; ++i) {
    if (m.skipped(i)) continue;
    const double wi = m.weight(i);
    double row = 0.0;
    for (int j = 0; j < m.rows; ++j) {
      if (m.skipped(j)) continue;
      row += m.weight(j) * kernel(m.point(i), m.point(j));
    }
    acc += wi * row;
  }
  return 0.5 * acc;
}

double PairwiseInteraction::linear_derivative_raw(const MeasureRef& m, const double* x) const {
  double acc = 0.0;
  for (int j = 0; j < m.rows; ++j) {
    if (m.skipped(j)) continue;
    acc += m.weight(j) * kernel(x, m.point(j));
  }
  return acc;
}

void PairwiseInteraction::intrinsic_derivative(const MeasureRef& m, const double* x, double* out) const {
  std::vector<double> g(d_);
  for (int k = 0; k < d_; ++k) out[k] = 0.0;
  for (int j = 0; j < m.rows; ++j) {
    if (m.skipped(j)) continue;
    kernel_grad(x, m.point(j), g.data());
    const double w = m.weight(j);
    for (int k = 0; k < d_; ++k) out[k] += w * g[k];
  }
}

void PairwiseInteraction::dmf_batch(const MeasureRef& m, const double* xs, int npts, double* out,
                                    Exec policy) const {
  parallel_for(policy, npts, [&](int i) {
    intrinsic_derivative(m, xs + static_cast<size_t>(i) * d_, out + static_cast<size_t>(i) * d_);
  });
}

// ---- TwoLayerNetLoss -------------------------------------------------------

TwoLayerNetLoss::TwoLayerNetLoss(std::vector<std::vector<double>> zs, std::vector<double> fs, double trunc)
    : zs_(std::move(zs)), fs_(std::move(fs)), trunc_(trunc) {
  if (zs_.empty() || zs_.size() != fs_.size())
    throw std::invalid_argument("two_layer: dataset must be nonempty with matching labels");
  dz_ = static_cast<int>(zs_.front().size());
  for (const auto& z : zs_)
    if (static_cast<int>(z.size()) != dz_) throw std::invalid_argument("two_layer: ragged inputs");
  if (trunc_ <= 0.0) throw std::invalid_argument("two_layer: truncation level must be positive");
}

TwoLayerNetLoss TwoLayerNetLoss::default_task(double trunc) {
  std::vector<std::vector<double>> zs;
  std::vector<double> fs;
  for (int k = 0; k < 5; ++k) {
    const double z = -2.0 + k * 1.0;
    zs.push_back({z});
    fs.push_back(std::sin(1.3 * z));
  }
  return TwoLayerNetLoss(std::move(zs), std::move(fs), trunc);
}

double TwoLayerNetLoss::neuron(const double* x, int k) const {
  const double c = x[0];
  const double* a = x + 1;
  const double b = x[1 + dz_];
  const double act = std::tanh(dot(a, zs_[k].data(), dz_) + b);
  return trunc_ * std::tanh(c / trunc_) * act;
}

void TwoLayerNetLoss::neuron_grad(const double* x, int k, double* out) const {
  const double c = x[0];
  const double* a = x + 1;
  const double b = x[1 + dz_];
  const double pre = dot(a, zs_[k].data(), dz_) + b;
  const double act = std::tanh(pre);
  const double dact = sech2(pre);
  const double ell = trunc_ * std::tanh(c / trunc_);
  const double dell = sech2(c / trunc_);
  out[0] = dell * act;
  for (int j = 0; j < dz_; ++j) out[1 + j] = ell * dact * zs_[k][j];
  out[1 + dz_] = ell * dact;
}

std::vector<double> TwoLayerNetLoss::residuals(const MeasureRef& m) const {
  std::vector<double> r(fs_);
  for (int i = 0; i < m.rows; ++i) {
    if (m.skipped(i)) continue;
    const double w = m.weight(i);
    const double* x = m.point(i);
    for (size_t k = 0; k < r.size(); ++k) r[k] -= w * neuron(x, static_cast<int>(k));
  }
  return r;
}

double TwoLayerNetLoss::eval(const MeasureRef& m) const {
  check_normalized(m, "two_layer.eval");
  const auto r = residuals(m);
  double s = 0.0;
  for (double v : r) s += v * v;
  return s;
}

double TwoLayerNetLoss::linear_derivative_raw(const MeasureRef& m, const double* x) const {
  const auto r = residuals(m);
  double s = 0.0;
  for (size_t k = 0; k < r.size(); ++k) s += r[k] * neuron(x, static_cast<int>(k));
  return -2.0 * s;
}

void TwoLayerNetLoss::intrinsic_derivative(const MeasureRef& m, const double* x, double* out) const {
  const auto r = residuals(m);
  const int d = dim();
  std::vector<double> g(d);
  for (int k = 0; k < d; ++k) out[k] = 0.0;
  for (size_t k = 0; k < r.size(); ++k) {
    neuron_grad(x, static_cast<int>(k), g.data());
    for (int j = 0; j < d; ++j) out[j] -= 2.0 * r[k] * g[j];
  }
}

double TwoLayerNetLoss::linear_derivative_bound() const {
  // |E^m neuron| <= trunc, |neuron| <= trunc
  double s = 0.0;
  for (double f : fs_) s += (std::abs(f) + trunc_) * trunc_;
  return 2.0 * s;
}

void TwoLayerNetLoss::dmf_batch(const MeasureRef& m, const double* xs, int npts, double* out,
                                Exec policy) const {
  const auto r = residuals(m);  // shared across evaluation points
  const int d = dim();
  parallel_for(policy, npts, [&](int i) {
    const double* x = xs + static_cast<size_t>(i) * d;
    double* o = out + static_cast<size_t>(i) * d;
    std::vector<double> g(d);
    for (int k = 0; k < d; ++k) o[k] = 0.0;
    for (size_t k = 0; k < r.size(); ++k) {
      neuron_grad(x, static_cast<int>(k), g.data());
      for (int j = 0; j < d; ++j) o[j] -= 2.0 * r[k] * g[j];
    }
  });
}

void TwoLayerNetLoss::dfdm_batch(const MeasureRef& m, const double* xs, int npts, double* out,
                                 Exec policy) const {
  const auto r = residuals(m);
  const int d = dim();
  parallel_for(policy, npts, [&](int i) {
    const double* x = xs + static_cast<size_t>(i) * d;
    double s = 0.0;
    for (size_t k = 0; k < r.size(); ++k) s += r[k] * neuron(x, static_cast<int>(k));
    out[i] = -2.0 * s;
  });
}

double TwoLayerNetLoss::linear_second_raw(const MeasureRef&, const double* x, const double* xp) const {
  double s = 0.0;
  for (size_t k = 0; k < fs_.size(); ++k) s += neuron(x, static_cast<int>(k)) * neuron(xp, static_cast<int>(k));
  return 2.0 * s;
}

// ---- FlippedIntrinsicSign (validation fault hook) --------------------------

void FlippedIntrinsicSign::intrinsic_derivative(const MeasureRef& m, const double* x, double* out) const {
  base_->intrinsic_derivative(m, x, out);
  for (int k = 0; k < dim(); ++k) out[k] = -out[k];
}

// ---- validate_derivatives --------------------------------------------------

namespace {

struct OwnedMeasure {
  std::vector<double> pts;
  std::vector<double> wts;  // empty => uniform
  int rows = 0, d = 0;
  MeasureRef ref() const {
    return MeasureRef{pts.data(), wts.empty() ? nullptr : wts.data(), rows, d, -1};
  }
};

OwnedMeasure random_cloud_measure(int rows, int d, CounterRng rng, uint64_t& ctr, bool weighted) {
  OwnedMeasure m;
  m.rows = rows;
  m.d = d;
  m.pts.resize(static_cast<size_t>(rows) * d);
  for (auto& v : m.pts) v = rng.normal(ctr++);
  if (weighted) {
    m.wts.resize(rows);
    double s = 0.0;
    for (auto& w : m.wts) {
      w = 0.1 + rng.uniform(ctr++);
      s += w;
    }
    for (auto& w : m.wts) w /= s;
  }
  return m;
}

double hybrid_err(double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); }

// F evaluated on m with one atom of weight eps moved onto x
double eval_mixed(const MeanFieldFunctional& F, const OwnedMeasure& m, const double* x, double eps) {
  OwnedMeasure mix = m;
  mix.rows = m.rows + 1;
  mix.pts.insert(mix.pts.end(), x, x + m.d);
  mix.wts.resize(mix.rows);
  for (int i = 0; i < m.rows; ++i) mix.wts[i] = (1.0 - eps) * (m.wts.empty() ? 1.0 / m.rows : m.wts[i]);
  mix.wts[m.rows] = eps;
  return F.eval(mix.ref());
}

}  // namespace

DerivativeReport validate_derivatives(const MeanFieldFunctional& F, uint64_t seed, double tol) {
  const int d = F.dim();
  CounterRng rng(seed, Stream::scratch, 0xF00D);
  uint64_t ctr = 0;

  DerivativeReport rep;
  DerivativeCheck lin{std::string(F.name()) + ".linear_vs_eval", 0.0, tol, true};
  DerivativeCheck intr{std::string(F.name()) + ".intrinsic_vs_linear", 0.0, tol, true};
  DerivativeCheck lift{std::string(F.name()) + ".particle_gradient_vs_lifted", 0.0, tol, true};
  DerivativeCheck sec{std::string(F.name()) + ".second_vs_linear", 0.0, tol, true};

  const double eps_m = 1e-5;   // measure-direction step (families are at most quadratic in m)
  const double eps_x = 1e-5;   // coordinate step

  std::vector<double> probe(d), probe2(d), grad(d), fd(d), gl(d), gr(d);

  for (int rows : {2, 3, 5, 8, 16}) {
    for (bool weighted : {false, true}) {
      OwnedMeasure m = random_cloud_measure(rows, d, rng, ctr, weighted);
      for (int rep_i = 0; rep_i < 3; ++rep_i) {
        for (int k = 0; k < d; ++k) probe[k] = rng.normal(ctr++);
        for (int k = 0; k < d; ++k) probe2[k] = rng.normal(ctr++);

        // (1) zero-mean linear derivative vs directional derivative of eval
        {
          const double fp = eval_mixed(F, m, probe.data(), eps_m);
          const double fm = eval_mixed(F, m, probe.data(), -eps_m);
          const double fd1 = (fp - fm) / (2.0 * eps_m);
          const double an = linear_derivative(F, m.ref(), probe.data());
          lin.max_rel_err = std::max(lin.max_rel_err, hybrid_err(fd1, an));
        }

        // (2) intrinsic derivative vs grad_x of the raw linear derivative
        {
          F.intrinsic_derivative(m.ref(), probe.data(), grad.data());
          for (int k = 0; k < d; ++k) {
            std::vector<double> xp(probe), xm(probe);
            xp[k] += eps_x;
            xm[k] -= eps_x;
            const double der = (F.linear_derivative_raw(m.ref(), xp.data()) -
                                F.linear_derivative_raw(m.ref(), xm.data())) /
                               (2.0 * eps_x);
            intr.max_rel_err = std::max(intr.max_rel_err, hybrid_err(der, grad[k]));
          }
        }

        // (3) lifted n-particle gradient vs FD of n F(emp), uniform clouds only
        if (!weighted) {
          const int i_probe = rep_i % m.rows;
          finite_particle_gradient(F, m.ref(), i_probe, grad.data());
          for (int k = 0; k < d; ++k) {
            OwnedMeasure mp = m, mm = m;
            mp.pts[static_cast<size_t>(i_probe) * d + k] += eps_x;
            mm.pts[static_cast<size_t>(i_probe) * d + k] -= eps_x;
            const double der =
                (m.rows * F.eval(mp.ref()) - m.rows * F.eval(mm.ref())) / (2.0 * eps_x);
            lift.max_rel_err = std::max(lift.max_rel_err, hybrid_err(der, grad[k]));
          }
        }

        // (4) second derivative vs FD of the raw linear derivative in m
        if (F.has_second_order()) {
          auto lin_mixed = [&](double eps) {
            OwnedMeasure mix = m;
            mix.rows = m.rows + 1;
            mix.pts.insert(mix.pts.end(), probe2.begin(), probe2.end());
            mix.wts.resize(mix.rows);
            for (int i = 0; i < m.rows; ++i)
              mix.wts[i] = (1.0 - eps) * (m.wts.empty() ? 1.0 / m.rows : m.wts[i]);
            mix.wts[m.rows] = eps;
            return F.linear_derivative_raw(mix.ref(), probe.data());
          };
          const double fd2 = (lin_mixed(eps_m) - lin_mixed(-eps_m)) / (2.0 * eps_m);
          const double an = F.linear_second_raw(m.ref(), probe.data(), probe2.data()) -
                            integrate(m.ref(), [&](const double* y) {
                              return F.linear_second_raw(m.ref(), probe.data(), y);
                            });
          sec.max_rel_err = std::max(sec.max_rel_err, hybrid_err(fd2, an));
        }
      }
    }
  }

  lin.pass = lin.max_rel_err <= lin.tol;
  intr.pass = intr.max_rel_err <= intr.tol;
  lift.pass = lift.max_rel_err <= lift.tol;
  sec.pass = sec.max_rel_err <= sec.tol;

  rep.checks.push_back(lin);
  rep.checks.push_back(intr);
  rep.checks.push_back(lift);
  if (F.has_second_order()) rep.checks.push_back(sec);
  return rep;
}

}  // namespace mfl
