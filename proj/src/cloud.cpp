#include "mfl/cloud.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace mfl {

DistributionSpec DistributionSpec::gaussian(double mean, double cov, int d) {
  if (cov <= 0.0) throw std::invalid_argument("distribution: gaussian cov must be positive");
  DistributionSpec s;
  s.kind = Kind::gaussian;
  s.mean = mean;
  s.cov = cov;
  s.d = d;
  return s;
}

DistributionSpec DistributionSpec::uniform(double a, double b, int d) {
  if (!(a < b)) throw std::invalid_argument("distribution: uniform needs a < b");
  DistributionSpec s;
  s.kind = Kind::uniform;
  s.a = a;
  s.b = b;
  s.d = d;
  return s;
}

DistributionSpec DistributionSpec::grid_density(std::shared_ptr<const GridDensity> g) {
  if (!g) throw std::invalid_argument("distribution: null grid density");
  DistributionSpec s;
  s.kind = Kind::grid;
  s.d = 1;
  s.grid = std::move(g);
  return s;
}

ParticleCloud::ParticleCloud(int n, int d, uint64_t master_seed)
    : n_(n), d_(d), master_seed_(master_seed), x_(static_cast<size_t>(n) * d, 0.0), streams_(n) {
  if (n <= 0 || d <= 0) throw std::invalid_argument("cloud: n and d must be positive");
  for (int i = 0; i < n; ++i) streams_[i] = static_cast<uint64_t>(i);
}

void ParticleCloud::permute(const std::vector<int>& perm) {
  if (static_cast<int>(perm.size()) != n_) throw std::invalid_argument("cloud: bad permutation size");
  std::vector<double> nx(x_.size());
  std::vector<uint64_t> ns(n_);
  std::vector<bool> seen(n_, false);
  for (int i = 0; i < n_; ++i) {
    const int j = perm[i];
    if (j < 0 || j >= n_ || seen[j]) throw std::invalid_argument("cloud: not a permutation");
    seen[j] = true;
    for (int k = 0; k < d_; ++k) nx[static_cast<size_t>(i) * d_ + k] = x_[static_cast<size_t>(j) * d_ + k];
    ns[i] = streams_[j];
  }
  x_ = std::move(nx);
  streams_ = std::move(ns);
}

ParticleCloud sample_cloud(const DistributionSpec& spec, int n, uint64_t master_seed, Stream tag,
                           uint64_t stream_offset) {
  ParticleCloud c(n, spec.d, master_seed);
  if (stream_offset) {
    for (int i = 0; i < n; ++i) c.streams_[i] += stream_offset;
  }
  const double sd = std::sqrt(spec.cov);
  for (int i = 0; i < n; ++i) {
    CounterRng rng(master_seed, tag, c.streams_[i]);
    double* x = c.point(i);
    switch (spec.kind) {
      case DistributionSpec::Kind::gaussian:
        for (int k = 0; k < spec.d; ++k) x[k] = spec.mean + sd * rng.normal(k);
        break;
      case DistributionSpec::Kind::uniform:
        for (int k = 0; k < spec.d; ++k) x[k] = rng.uniform(k, spec.a, spec.b);
        break;
      case DistributionSpec::Kind::grid:
        x[0] = spec.grid->quantile(rng.uniform(0));
        break;
    }
  }
  return c;
}

double empirical_moment(const ParticleCloud& c, int q) {
  if (q <= 0 || q % 2 != 0) throw std::invalid_argument("empirical_moment: q must be a positive even integer");
  double acc = 0.0;
  for (int i = 0; i < c.size(); ++i) {
    double s = 0.0;
    const double* x = c.point(i);
    for (int k = 0; k < c.dim(); ++k) s += x[k] * x[k];
    acc += std::pow(s, q / 2.0);
  }
  return acc / c.size();
}

MeasureRef leave_one_out(const ParticleCloud& c, int i) {
  if (i < 0 || i >= c.size()) throw std::invalid_argument("leave_one_out: index out of range");
  if (c.size() < 2) throw std::invalid_argument("leave_one_out: needs at least two particles");
  MeasureRef m = c.measure();
  m.skip = i;
  return m;
}

void write_cloud_csv(const std::string& path, const ParticleCloud& c) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  std::fprintf(f, "particle_id");
  for (int k = 0; k < c.dim(); ++k) std::fprintf(f, ",x_%d", k);
  std::fprintf(f, "\n");
  for (int i = 0; i < c.size(); ++i) {
    std::fprintf(f, "%d", i);
    for (int k = 0; k < c.dim(); ++k) std::fprintf(f, ",%.17g", c.point(i)[k]);
    std::fprintf(f, "\n");
  }
  std::fclose(f);
}

}  // namespace mfl
