#include "mfl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "mfl/assignment.hpp"
#include "mfl/rng.hpp"

namespace mfl {

double w2_1d_exact(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("w2_1d: empty sample set");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const size_t m = a.size(), k = b.size();
  if (m == k) {
    double acc = 0.0;
    for (size_t i = 0; i < m; ++i) {
      const double e = a[i] - b[i];
      acc += e * e;
    }
    return acc / m;
  }
  // squared quantile difference integrated over the merged partition of (0,1)
  size_t i = 0, j = 0;
  double p = 0.0, acc = 0.0;
  while (i < m && j < k) {
    const unsigned long long la = (i + 1) * static_cast<unsigned long long>(k);
    const unsigned long long rb = (j + 1) * static_cast<unsigned long long>(m);
    const double pn = (la <= rb) ? static_cast<double>(i + 1) / m : static_cast<double>(j + 1) / k;
    const double d = a[i] - b[j];
    acc += (pn - p) * d * d;
    if (la <= rb) ++i;
    if (rb <= la) ++j;
    p = pn;
  }
  return acc;
}

double w2_exact_assignment(const double* a, const double* b, int n, int d) {
  if (n < 1) throw std::invalid_argument("w2_assignment: empty clouds");
  if (n > 256) throw std::invalid_argument("w2_assignment: size limit 256 exceeded");
  std::vector<double> cost(static_cast<size_t>(n) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int k = 0; k < d; ++k) {
        const double e = a[static_cast<size_t>(i) * d + k] - b[static_cast<size_t>(j) * d + k];
        s += e * e;
      }
      cost[static_cast<size_t>(i) * n + j] = s;
    }
  return solve_assignment(cost, n) / n;
}

double w2_exact_assignment(const ParticleCloud& a, const ParticleCloud& b) {
  if (a.size() != b.size() || a.dim() != b.dim())
    throw std::invalid_argument("w2_assignment: clouds must match in shape");
  return w2_exact_assignment(a.data(), b.data(), a.size(), a.dim());
}

namespace {

double lse(const std::vector<double>& v) {
  const double mx = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

struct Support {
  std::vector<double> pts;   // rows x d
  std::vector<double> logw;  // log weights
  int rows = 0, d = 0;
};

Support collect(const MeasureRef& m) {
  Support s;
  s.d = m.d;
  for (int i = 0; i < m.rows; ++i) {
    if (m.skipped(i)) continue;
    for (int k = 0; k < m.d; ++k) s.pts.push_back(m.point(i)[k]);
    s.logw.push_back(std::log(m.weight(i)));
    ++s.rows;
  }
  return s;
}

struct OtDual {
  double value = 0.0;
  int iterations = 0;
  double violation = 0.0;
  bool converged = false;
};

// Entropic OT dual value between weighted supports, log-domain updates,
// epsilon annealed from 10x target down to target.
OtDual ot_eps(const Support& a, const Support& b, double eps_target, int max_iter) {
  const int n = a.rows, m = b.rows;
  std::vector<double> C(static_cast<size_t>(n) * m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) {
      double s = 0.0;
      for (int k = 0; k < a.d; ++k) {
        const double e = a.pts[static_cast<size_t>(i) * a.d + k] - b.pts[static_cast<size_t>(j) * b.d + k];
        s += e * e;
      }
      C[static_cast<size_t>(i) * m + j] = s;
    }

  std::vector<double> f(n, 0.0), g(m, 0.0), rowbuf(m), colbuf(n);
  OtDual out;
  const double tol = 1e-9;

  std::vector<double> levels;
  for (double e = 10.0 * eps_target; e > eps_target; e *= 0.5) levels.push_back(e);
  levels.push_back(eps_target);

  for (size_t lev = 0; lev < levels.size(); ++lev) {
    const double eps = levels[lev];
    const bool final_level = (lev + 1 == levels.size());
    const int budget = final_level ? max_iter : 50;
    for (int it = 0; it < budget; ++it) {
      for (int j = 0; j < m; ++j) {
        for (int i = 0; i < n; ++i) colbuf[i] = (f[i] - C[static_cast<size_t>(i) * m + j]) / eps + a.logw[i];
        g[j] = -eps * lse(colbuf);
      }
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < m; ++j) rowbuf[j] = (g[j] - C[static_cast<size_t>(i) * m + j]) / eps + b.logw[j];
        f[i] = -eps * lse(rowbuf);
      }
      ++out.iterations;
      // rows are exact after the f-update; check the column marginals
      double viol = 0.0;
      for (int j = 0; j < m; ++j) {
        double s = 0.0;
        for (int i = 0; i < n; ++i)
          s += std::exp((f[i] + g[j] - C[static_cast<size_t>(i) * m + j]) / eps + a.logw[i] + b.logw[j]);
        viol = std::max(viol, std::abs(s - std::exp(b.logw[j])));
      }
      out.violation = viol;
      if (final_level && viol < tol) {
        out.converged = true;
        break;
      }
      if (!final_level && viol < tol) break;
    }
  }
  double val = 0.0;
  for (int i = 0; i < n; ++i) val += std::exp(a.logw[i]) * f[i];
  for (int j = 0; j < m; ++j) val += std::exp(b.logw[j]) * g[j];
  out.value = val;
  return out;
}

}  // namespace

SinkhornResult w2_sinkhorn(const MeasureRef& a, const MeasureRef& b, double epsilon, int max_iter) {
  if (epsilon <= 0.0) throw std::invalid_argument("sinkhorn: epsilon must be positive");
  if (a.d != b.d) throw std::invalid_argument("sinkhorn: dimension mismatch");
  const Support sa = collect(a), sb = collect(b);
  if (sa.rows == 0 || sb.rows == 0) throw std::invalid_argument("sinkhorn: empty support");
  const OtDual ab = ot_eps(sa, sb, epsilon, max_iter);
  const OtDual aa = ot_eps(sa, sa, epsilon, max_iter);
  const OtDual bb = ot_eps(sb, sb, epsilon, max_iter);
  SinkhornResult r;
  r.cost = ab.value - 0.5 * (aa.value + bb.value);
  r.epsilon = epsilon;
  r.iterations = ab.iterations + aa.iterations + bb.iterations;
  r.marginal_violation = std::max({ab.violation, aa.violation, bb.violation});
  r.converged = ab.converged && aa.converged && bb.converged;
  return r;
}

EntropyEstimate relative_entropy_detail(const double* xs, int n, const GridDensity& ref) {
  if (n < 1) throw std::invalid_argument("relative_entropy: empty sample set");
  const double L = ref.spec().half_width;
  const int M = ref.cells();
  const double h = ref.h();

  std::vector<double> sorted(xs, xs + n);
  std::sort(sorted.begin(), sorted.end());
  const double q25 = sorted[static_cast<size_t>(0.25 * (n - 1))];
  const double q75 = sorted[static_cast<size_t>(0.75 * (n - 1))];
  double width = 2.0 * (q75 - q25) * std::pow(static_cast<double>(n), -1.0 / 3.0);
  if (!(width > 0.0)) width = h;
  const int k = std::clamp(static_cast<int>(std::llround(width / h)), 1, M);
  const int nb = (M + k - 1) / k;

  std::vector<long long> counts(nb, 0);
  long long leak = 0;
  for (int i = 0; i < n; ++i) {
    const double x = xs[i];
    if (x < -L || x > L) {
      ++leak;
      continue;
    }
    int cell = static_cast<int>((x + L) / h);
    cell = std::clamp(cell, 0, M - 1);
    ++counts[cell / k];
  }
  if (leak > 1e-6 * n)
    throw std::runtime_error("relative_entropy: sample mass outside the grid domain (fraction " +
                             std::to_string(static_cast<double>(leak) / n) + ")");
  const long long kept = n - leak;
  if (kept < 1) throw std::runtime_error("relative_entropy: no samples inside the grid domain");

  EntropyEstimate est;
  est.samples = static_cast<int>(kept);
  double kl = 0.0;
  for (int b = 0; b < nb; ++b) {
    if (counts[b] == 0) continue;
    ++est.occupied_bins;
    const double p = static_cast<double>(counts[b]) / kept;
    double q = 0.0;
    for (int c = b * k; c < std::min((b + 1) * k, M); ++c) q += h * ref.value(c);
    if (q < 1e-300)
      throw std::runtime_error("relative_entropy: reference vanishes on an occupied bin");
    kl += p * std::log(p / q);
  }
  est.kl = std::max(kl, 0.0);
  est.bias_correction = (est.occupied_bins - 1) / (2.0 * kept);
  return est;
}

double relative_entropy_1d(const double* xs, int n, const GridDensity& ref) {
  return relative_entropy_detail(xs, n, ref).kl;
}

double relative_entropy_1d(const ParticleCloud& samples, const GridDensity& ref) {
  if (samples.dim() != 1) throw std::invalid_argument("relative_entropy: samples must be one-dimensional");
  return relative_entropy_1d(samples.data(), samples.size(), ref);
}

double relative_entropy_1d(const GridDensity& m, const GridDensity& ref) {
  if (m.spec().half_width != ref.spec().half_width || m.cells() != ref.cells())
    throw std::invalid_argument("relative_entropy: grids must share the same spec");
  const double h = m.h();
  double kl = 0.0;
  for (int i = 0; i < m.cells(); ++i) {
    const double p = h * m.value(i);
    if (p <= 0.0) continue;
    const double q = h * ref.value(i);
    if (q < 1e-300) throw std::runtime_error("relative_entropy: reference vanishes where density is positive");
    kl += p * std::log(p / q);
  }
  return std::max(kl, 0.0);
}

FreeEnergyEstimate free_energy_particle(const std::vector<const ParticleCloud*>& replicas,
                                        const MeanFieldFunctional& F, const ConfiningPotential& u,
                                        double sigma, const GridSpec& grid) {
  if (replicas.size() < 2) throw std::invalid_argument("free_energy: need at least 2 replicas");
  FreeEnergyEstimate est;
  est.replicas = static_cast<int>(replicas.size());
  const int d = replicas[0]->dim();
  if (d != 1) throw std::invalid_argument("free_energy: entropy estimate needs one-dimensional clouds");
  std::vector<double> pooled;
  for (const ParticleCloud* c : replicas) {
    if (c->dim() != d) throw std::invalid_argument("free_energy: replica dimension mismatch");
    est.interaction += F.eval(c->measure());
    pooled.insert(pooled.end(), c->data(), c->data() + c->size());
  }
  est.interaction /= est.replicas;
  const GridDensity mu = GridDensity::from_potential(grid, u);
  est.entropy = 0.5 * sigma * sigma *
                relative_entropy_1d(pooled.data(), static_cast<int>(pooled.size()), mu);
  est.value = est.interaction + est.entropy;
  return est;
}

size_t DiscreteJoint::cells() const {
  size_t c = 1;
  for (int s : sizes) c *= static_cast<size_t>(s);
  return c;
}

void DiscreteJoint::validate() const {
  if (sizes.empty() || sizes.size() > 4)
    throw std::invalid_argument("discrete joint: need 1..4 variables");
  for (int s : sizes)
    if (s < 1 || s > 8) throw std::invalid_argument("discrete joint: alphabet sizes must be 1..8");
  if (pmf.size() != cells()) throw std::invalid_argument("discrete joint: pmf size mismatch");
  double sum = 0.0;
  for (double p : pmf) {
    if (p < 0.0) throw std::invalid_argument("discrete joint: negative pmf entry");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw std::invalid_argument("discrete joint: pmf must sum to 1");
}

DiscreteJoint DiscreteJoint::random(const std::vector<int>& sizes, uint64_t seed) {
  DiscreteJoint j;
  j.sizes = sizes;
  const size_t c = j.cells();
  j.pmf.resize(c);
  const CounterRng rng(seed, Stream::scratch, 0xd1);
  double sum = 0.0;
  for (size_t i = 0; i < c; ++i) {
    j.pmf[i] = -std::log(rng.uniform(i));  // Exp(1) -> Dirichlet(1,...,1) after normalization
    sum += j.pmf[i];
  }
  for (double& p : j.pmf) p /= sum;
  // renormalize exactly enough for validate()
  double s2 = std::accumulate(j.pmf.begin(), j.pmf.end(), 0.0);
  for (double& p : j.pmf) p /= s2;
  j.validate();
  return j;
}

DiscreteJoint DiscreteJoint::independent(const std::vector<std::vector<double>>& marginals) {
  DiscreteJoint j;
  for (const auto& m : marginals) j.sizes.push_back(static_cast<int>(m.size()));
  const size_t c = j.cells();
  j.pmf.assign(c, 1.0);
  // row-major: the last variable varies fastest
  for (size_t idx = 0; idx < c; ++idx) {
    size_t rem = idx;
    for (int v = j.k() - 1; v >= 0; --v) {
      const int x = static_cast<int>(rem % j.sizes[v]);
      rem /= j.sizes[v];
      j.pmf[idx] *= marginals[v][x];
    }
  }
  j.validate();
  return j;
}

namespace {

// expected log of the marginal over the variables in `mask`, under the joint
double expected_log_marginal(const DiscreteJoint& j, unsigned mask) {
  if (mask == 0) return 0.0;  // log of the empty marginal is 0
  const int k = j.k();
  std::vector<size_t> stride(k);
  size_t s = 1;
  for (int v = k - 1; v >= 0; --v) {
    stride[v] = s;
    s *= j.sizes[v];
  }
  // build the marginal table indexed by the kept variables
  std::vector<size_t> kept_stride(k, 0);
  size_t msize = 1;
  for (int v = k - 1; v >= 0; --v) {
    if (mask & (1u << v)) {
      kept_stride[v] = msize;
      msize *= j.sizes[v];
    }
  }
  std::vector<double> marg(msize, 0.0);
  const size_t c = j.cells();
  for (size_t idx = 0; idx < c; ++idx) {
    size_t mi = 0;
    for (int v = 0; v < k; ++v)
      if (mask & (1u << v)) mi += ((idx / stride[v]) % j.sizes[v]) * kept_stride[v];
    marg[mi] += j.pmf[idx];
  }
  double acc = 0.0;
  for (size_t idx = 0; idx < c; ++idx) {
    const double p = j.pmf[idx];
    if (p <= 0.0) continue;
    size_t mi = 0;
    for (int v = 0; v < k; ++v)
      if (mask & (1u << v)) mi += ((idx / stride[v]) % j.sizes[v]) * kept_stride[v];
    acc += p * std::log(marg[mi]);
  }
  return acc;
}

}  // namespace

ChainEntropyResult chain_entropy_check(const DiscreteJoint& j) {
  j.validate();
  const int k = j.k();
  const unsigned all = (1u << k) - 1;
  ChainEntropyResult r;
  r.joint_log_score = expected_log_marginal(j, all);
  for (int i = 0; i < k; ++i) {
    // E[log P(X^i | everything else)] = E[log P(X)] - E[log P(X^{-i})]
    r.full_conditional_sum += r.joint_log_score - expected_log_marginal(j, all & ~(1u << i));
    // E[log P(X^i | X^1..X^{i-1})] = E[log P(X^1..X^i)] - E[log P(X^1..X^{i-1})]
    const unsigned pre = (1u << i) - 1;  // variables before i
    r.chain_sum += expected_log_marginal(j, pre | (1u << i)) - expected_log_marginal(j, pre);
  }
  return r;
}

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile: p must be in (0,1)");
  double lo = -40.0, hi = 40.0;
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    (normal_cdf(mid) < p ? lo : hi) = mid;
  }
  double z = 0.5 * (lo + hi);
  for (int it = 0; it < 4; ++it) {
    const double pdf = normal_pdf(z);
    if (pdf < 1e-300) break;
    z -= (normal_cdf(z) - p) / pdf;
  }
  return z;
}

namespace {

// int_{p0}^{p1} (x - mean - sd*z(p))^2 dp for the standard normal quantile z
double gaussian_segment(double x, double mean, double sd, double p0, double p1) {
  const double z0 = p0 <= 0.0 ? -std::numeric_limits<double>::infinity() : normal_quantile(p0);
  const double z1 = p1 >= 1.0 ? std::numeric_limits<double>::infinity() : normal_quantile(p1);
  const double phi0 = std::isinf(z0) ? 0.0 : normal_pdf(z0);
  const double phi1 = std::isinf(z1) ? 0.0 : normal_pdf(z1);
  const double zphi0 = std::isinf(z0) ? 0.0 : z0 * phi0;
  const double zphi1 = std::isinf(z1) ? 0.0 : z1 * phi1;
  const double dp = p1 - p0;
  const double c = x - mean;
  return c * c * dp - 2.0 * c * sd * (phi0 - phi1) + sd * sd * (dp - (zphi1 - zphi0));
}

// int_{p0}^{p1} (c - w*p)^2 dp with w > 0
double affine_segment(double c, double w, double p0, double p1) {
  const double a = c - w * p0, b = c - w * p1;
  return (a * a * a - b * b * b) / (3.0 * w);
}

double w2_sq_vs_grid(const std::vector<double>& xs, const GridDensity& g) {
  const int n = static_cast<int>(xs.size());
  const int M = g.cells();
  const double h = g.h();
  std::vector<double> cmass(M + 1, 0.0);
  for (int c = 0; c < M; ++c) cmass[c + 1] = cmass[c] + h * g.value(c);
  const double total = cmass[M];
  for (double& v : cmass) v /= total;

  double acc = 0.0;
  int i = 0, c = 0;
  double p = 0.0;
  while (i < n) {
    while (c < M && (cmass[c + 1] <= p || g.value(c) <= 0.0)) ++c;
    if (c >= M) break;
    const double pi = static_cast<double>(i + 1) / n;
    const double pc = cmass[c + 1];
    const double pn = std::min(pi, pc);
    if (pn > p) {
      // on this run the law's quantile is x_left + (q - cmass[c]) / v_c
      const double v = g.value(c) / total;
      const double x_left = -g.spec().half_width + c * h;
      const double alpha = x_left - cmass[c] / v;
      // (x_i - alpha - (1/v) q)^2 integrated over q in [p, pn]
      acc += affine_segment(xs[i] - alpha, 1.0 / v, p, pn);
      p = pn;
    }
    if (pn >= pi) ++i;
    if (pn >= pc) ++c;
  }
  return acc;
}

}  // namespace

double w2_sq_empirical_vs_law(std::vector<double> xs, const DistributionSpec& spec) {
  if (spec.d != 1) throw std::invalid_argument("w2 vs law: only one-dimensional laws supported");
  if (xs.empty()) throw std::invalid_argument("w2 vs law: empty sample set");
  std::sort(xs.begin(), xs.end());
  const int n = static_cast<int>(xs.size());
  double acc = 0.0;
  switch (spec.kind) {
    case DistributionSpec::Kind::gaussian: {
      const double sd = std::sqrt(spec.cov);
      for (int i = 0; i < n; ++i)
        acc += gaussian_segment(xs[i], spec.mean, sd, static_cast<double>(i) / n,
                                static_cast<double>(i + 1) / n);
      return acc;
    }
    case DistributionSpec::Kind::uniform: {
      const double w = spec.b - spec.a;
      if (!(w > 0.0)) throw std::invalid_argument("w2 vs law: uniform law needs a < b");
      for (int i = 0; i < n; ++i)
        acc += affine_segment(xs[i] - spec.a, w, static_cast<double>(i) / n,
                              static_cast<double>(i + 1) / n);
      return acc;
    }
    case DistributionSpec::Kind::grid: {
      if (!spec.grid) throw std::invalid_argument("w2 vs law: missing grid density");
      return w2_sq_vs_grid(xs, *spec.grid);
    }
  }
  throw std::logic_error("w2 vs law: unhandled law kind");
}

RateReport empirical_w2_rate(const DistributionSpec& spec, const std::vector<int>& n_list, int replicas,
                             uint64_t seed, Exec policy) {
  if (n_list.empty()) throw std::invalid_argument("w2 rate: empty n list");
  if (replicas < 2) throw std::invalid_argument("w2 rate: need at least 2 replicas");
  const int nn = static_cast<int>(n_list.size());
  std::vector<double> vals(static_cast<size_t>(nn) * replicas);
  parallel_for(policy, nn * replicas, [&](int job) {
    const int ni = job / replicas, r = job % replicas;
    const uint64_t s = CounterRng(seed, Stream::scratch, (static_cast<uint64_t>(ni) << 32) | r).bits(0);
    const ParticleCloud c = sample_cloud(spec, n_list[ni], s);
    std::vector<double> xs(c.data(), c.data() + c.size());
    vals[job] = w2_sq_empirical_vs_law(std::move(xs), spec);
  });

  RateReport rep;
  std::vector<double> xs, ys;
  for (int ni = 0; ni < nn; ++ni) {
    RatePoint pt;
    pt.n = n_list[ni];
    pt.replicas = replicas;
    double sum = 0.0;
    for (int r = 0; r < replicas; ++r) sum += vals[static_cast<size_t>(ni) * replicas + r];
    pt.mean = sum / replicas;
    double var = 0.0;
    for (int r = 0; r < replicas; ++r) {
      const double e = vals[static_cast<size_t>(ni) * replicas + r] - pt.mean;
      var += e * e;
    }
    pt.se = std::sqrt(var / (replicas - 1.0) / replicas);
    rep.points.push_back(pt);
    xs.push_back(pt.n);
    ys.push_back(pt.mean);
  }
  rep.fit = fit_powerlaw(xs, ys, 200, seed ^ 0x57325261ULL);
  return rep;
}

void write_rate_csv(const std::string& path, const std::vector<RatePoint>& points) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  std::fprintf(f, "n,mean_value,stderr,replicas\n");
  for (const auto& p : points) std::fprintf(f, "%d,%.17g,%.17g,%d\n", p.n, p.mean, p.se, p.replicas);
  std::fclose(f);
}

}  // namespace mfl
