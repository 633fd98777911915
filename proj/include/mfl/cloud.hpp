#pragma once
// Particle clouds: n points in R^d with recorded RNG lineage (master seed +
// per-particle stream indices), so identical (config, seed) reproduce clouds
// and trajectories bit-exactly and coupled systems can share noise by
// particle identity.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "mfl/grid1d.hpp"
#include "mfl/measure.hpp"
#include "mfl/rng.hpp"

namespace mfl {

struct DistributionSpec {
  enum class Kind { gaussian, uniform, grid };
  Kind kind = Kind::gaussian;
  int d = 1;
  double mean = 0.0, cov = 1.0;  // gaussian: isotropic, same mean in every coordinate
  double a = 0.0, b = 1.0;       // uniform box per coordinate
  std::shared_ptr<const GridDensity> grid;  // grid: 1-D density to sample by inverse CDF

  static DistributionSpec gaussian(double mean, double cov, int d = 1);
  static DistributionSpec uniform(double a, double b, int d = 1);
  static DistributionSpec grid_density(std::shared_ptr<const GridDensity> g);
};

class ParticleCloud {
 public:
  ParticleCloud() = default;
  ParticleCloud(int n, int d, uint64_t master_seed);

  int size() const { return n_; }
  int dim() const { return d_; }
  uint64_t master_seed() const { return master_seed_; }

  double* data() { return x_.data(); }
  const double* data() const { return x_.data(); }
  double* point(int i) { return x_.data() + static_cast<size_t>(i) * d_; }
  const double* point(int i) const { return x_.data() + static_cast<size_t>(i) * d_; }

  // stream index carried by particle i (its identity for noise coupling)
  uint64_t stream(int i) const { return streams_[i]; }
  CounterRng noise_rng(int i) const { return CounterRng(master_seed_, Stream::noise, streams_[i]); }

  MeasureRef measure() const { return MeasureRef{x_.data(), nullptr, n_, d_, -1}; }

  // reorder particles; stream indices travel with their particles
  void permute(const std::vector<int>& perm);

 private:
  friend ParticleCloud sample_cloud(const DistributionSpec&, int, uint64_t, Stream, uint64_t);
  int n_ = 0, d_ = 0;
  uint64_t master_seed_ = 0;
  std::vector<double> x_;
  std::vector<uint64_t> streams_;
};

// stream_offset separates the identities of auxiliary populations (for
// example a big oracle cloud) from the primary particles
ParticleCloud sample_cloud(const DistributionSpec& spec, int n, uint64_t master_seed,
                           Stream tag = Stream::init, uint64_t stream_offset = 0);

// (1/n) sum_i |x_i|^q for even q
double empirical_moment(const ParticleCloud& c, int q);

// (n-1)-point empirical measure with row i removed; no copy
MeasureRef leave_one_out(const ParticleCloud& c, int i);

void write_cloud_csv(const std::string& path, const ParticleCloud& c);

}  // namespace mfl
