#pragma once
// Counter-based random streams: every draw is a pure function of
// (master seed, stream tag, stream index, counter), so trajectories are
// bit-identical no matter how loops are scheduled across threads.

#include <cmath>
#include <cstdint>

namespace mfl {

inline constexpr double kPi = 3.14159265358979323846;

// splitmix64 finalizer; good enough scrambling for Monte Carlo use.
inline uint64_t mix64(uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Named substreams: which role a stream plays within one run.
enum class Stream : uint64_t {
  init = 0x696e6974,          // initial positions
  noise = 0x6e6f6973,         // Brownian increments (shared by coupled pairs)
  reference_init = 0x72666931,// independent reference starts, when enabled
  oracle_noise = 0x6f726e6f,  // big-cloud oracle increments
  scratch = 0x73637261        // bootstraps, shuffles, synthetic draws
};

struct CounterRng {
  uint64_t key = 0;

  CounterRng() = default;
  CounterRng(uint64_t master_seed, Stream tag, uint64_t index) {
    key = mix64(master_seed ^ mix64(static_cast<uint64_t>(tag)) ^ mix64(0x5851f42d4c957f2dULL * (index + 1)));
  }

  uint64_t bits(uint64_t counter) const { return mix64(key ^ (0xda942042e4dd58b5ULL * (counter + 1))); }

  // uniform on (0,1), never exactly 0 or 1
  double uniform(uint64_t counter) const {
    return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(uint64_t counter, double a, double b) const { return a + (b - a) * uniform(counter); }

  // standard normal via Box-Muller; one counter consumes two sub-draws
  double normal(uint64_t counter) const {
    const double u1 = uniform(2 * counter);
    const double u2 = uniform(2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  // integer in [0, n)
  uint64_t below(uint64_t counter, uint64_t n) const { return bits(counter) % n; }
};

}  // namespace mfl
