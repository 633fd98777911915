#pragma once
// Distances, entropies, and information identities used by the experiments:
// exact 1-D and small-n W2, debiased entropic transport, histogram relative
// entropy against a grid reference, the per-particle free-energy estimate,
// discrete conditional-entropy identities, and the empirical-measure W2 rate.

#include <cstdint>
#include <string>
#include <vector>

#include "mfl/cloud.hpp"
#include "mfl/fit.hpp"
#include "mfl/functionals.hpp"
#include "mfl/grid1d.hpp"
#include "mfl/kernels.hpp"

namespace mfl {

// Squared 2-Wasserstein distance between 1-D samples by monotone matching.
// Unequal counts integrate the squared quantile difference exactly.
double w2_1d_exact(std::vector<double> a, std::vector<double> b);

// Exact squared transport cost between same-size clouds, O(n^3), n <= 256.
double w2_exact_assignment(const ParticleCloud& a, const ParticleCloud& b);
double w2_exact_assignment(const double* a, const double* b, int n, int d);

struct SinkhornResult {
  double cost = 0.0;                 // debiased entropic cost
  double epsilon = 0.0;              // final regularization
  int iterations = 0;                // total over all three subproblems
  double marginal_violation = 0.0;   // worst column-marginal error at exit
  bool converged = false;
};

// Debiased entropic transport cost S_eps(a,b) = OT_eps(a,b)
// - (OT_eps(a,a) + OT_eps(b,b))/2, log-domain, epsilon annealed from 10x target.
SinkhornResult w2_sinkhorn(const MeasureRef& a, const MeasureRef& b, double epsilon, int max_iter = 20000);

// Relative entropy H(m | ref) in one dimension. Samples are binned into
// an integer number of grid cells sized by the Freedman-Diaconis rule, ref
// mass aggregated over the same bins; the result is a bin-mass KL >= 0.
// Sample mass outside the grid domain beyond 1e-6 is an error.
double relative_entropy_1d(const double* xs, int n, const GridDensity& ref);
double relative_entropy_1d(const ParticleCloud& samples, const GridDensity& ref);
// Grid against grid on the identical grid spec: direct quadrature.
double relative_entropy_1d(const GridDensity& m, const GridDensity& ref);

// Detailed histogram estimate with the first-order plug-in bias term
// (occupied_bins-1)/(2n) reported so callers may subtract it.
struct EntropyEstimate {
  double kl = 0.0;
  int occupied_bins = 0;
  int samples = 0;
  double bias_correction = 0.0;
};
EntropyEstimate relative_entropy_detail(const double* xs, int n, const GridDensity& ref);

// Per-particle free energy proxy over independent replica clouds:
// mean F(emp) + (sigma^2/2) H(pooled marginal | mu), mu ~ exp(-u).
// The joint-entropy term is replaced by the one-particle marginal.
struct FreeEnergyEstimate {
  double value = 0.0;        // interaction + entropy
  double interaction = 0.0;  // mean of F(empirical) over replicas
  double entropy = 0.0;      // (sigma^2/2) H(pooled | mu)
  int replicas = 0;
};
FreeEnergyEstimate free_energy_particle(const std::vector<const ParticleCloud*>& replicas,
                                        const MeanFieldFunctional& F, const ConfiningPotential& u,
                                        double sigma, const GridSpec& grid);

// Finite joint distribution over k variables with small alphabets.
struct DiscreteJoint {
  std::vector<int> sizes;   // alphabet size per variable
  std::vector<double> pmf;  // row-major over (x_1, ..., x_k)

  int k() const { return static_cast<int>(sizes.size()); }
  size_t cells() const;
  void validate() const;  // pmf >= 0, sums to 1 within 1e-12, k <= 4, sizes <= 8

  static DiscreteJoint random(const std::vector<int>& sizes, uint64_t seed);  // Dirichlet(1) weights
  static DiscreteJoint independent(const std::vector<std::vector<double>>& marginals);
};

// Signed-entropy identities: all terms use H(P) = E[log P] (the negative of
// Shannon entropy), under which conditioning on more variables can only
// increase a term. Exact enumeration.
struct ChainEntropyResult {
  double full_conditional_sum = 0.0;  // sum_i E[log P(X^i | all others)]
  double chain_sum = 0.0;             // E[log P(X^1)] + sum_{i>1} E[log P(X^i | X^1..X^{i-1})]
  double joint_log_score = 0.0;       // E[log P(X)]
};
ChainEntropyResult chain_entropy_check(const DiscreteJoint& j);

// Standard normal helpers (quantile solved to ~1e-14 via bisection+Newton).
double normal_cdf(double x);
double normal_pdf(double x);
double normal_quantile(double p);

// E[W2^2(empirical_n, law)] for 1-D laws, exact per draw via the quantile
// integral, averaged over replicas, with a log-log power-law fit.
struct RatePoint {
  int n = 0;
  double mean = 0.0;
  double se = 0.0;
  int replicas = 0;
};
struct RateReport {
  std::vector<RatePoint> points;
  PowerlawFit fit;
};
RateReport empirical_w2_rate(const DistributionSpec& spec, const std::vector<int>& n_list, int replicas,
                             uint64_t seed, Exec policy = Exec::parallel);

// Exact squared W2 between the empirical measure of 1-D samples and the law
// described by spec (gaussian/uniform in closed form, grid by quadrature).
double w2_sq_empirical_vs_law(std::vector<double> xs, const DistributionSpec& spec);

void write_rate_csv(const std::string& path, const std::vector<RatePoint>& points);

}  // namespace mfl
