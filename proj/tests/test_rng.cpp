#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include "mfl/rng.hpp"

using namespace mfl;

TEST_CASE("mix64 matches the splitmix64 reference sequence") {
  // first outputs of splitmix64 from state 0
  CHECK(mix64(0) == 0xe220a8397b1dcdafULL);
  uint64_t state = 0;
  const uint64_t expected[3] = {0xe220a8397b1dcdafULL, 0x6e789e6aa1b965f4ULL, 0x06c45d188009454fULL};
  for (int i = 0; i < 3; ++i) {
    const uint64_t out = mix64(state);
    CHECK(out == expected[i]);
    state += 0x9e3779b97f4a7c15ULL;
  }
}

TEST_CASE("uniform stays strictly inside (0,1) and has the right moments") {
  CounterRng r(42, Stream::scratch, 0);
  const int n = 200000;
  double lo = 1.0, hi = 0.0, sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform(i);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    sum += u;
    sum2 += u * u;
  }
  CHECK(lo > 0.0);
  CHECK(hi < 1.0);
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  CHECK(mean == doctest::Approx(0.5).epsilon(0.01));
  CHECK(var == doctest::Approx(1.0 / 12.0).epsilon(0.02));
}

TEST_CASE("uniform(a,b) maps into the requested interval") {
  CounterRng r(7, Stream::scratch, 3);
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform(i, -2.0, 5.0);
    CHECK(u > -2.0);
    CHECK(u < 5.0);
  }
}

TEST_CASE("normal draws have standard moments") {
  CounterRng r(123, Stream::noise, 5);
  const int n = 200000;
  double s1 = 0.0, s2 = 0.0, s3 = 0.0, s4 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal(i);
    s1 += z;
    s2 += z * z;
    s3 += z * z * z;
    s4 += z * z * z * z;
  }
  s1 /= n;
  s2 /= n;
  s3 /= n;
  s4 /= n;
  CHECK(std::abs(s1) < 4.0 / std::sqrt(double(n)));
  CHECK(s2 == doctest::Approx(1.0).epsilon(0.02));
  CHECK(std::abs(s3) < 0.05);
  CHECK(s4 == doctest::Approx(3.0).epsilon(0.06));
}

TEST_CASE("draws are pure functions of (seed, stream, index, counter)") {
  CounterRng a(99, Stream::init, 17);
  CounterRng b(99, Stream::init, 17);
  for (uint64_t c = 0; c < 50; ++c) {
    CHECK(a.bits(c) == b.bits(c));
    CHECK(a.normal(c) == b.normal(c));
  }
  // order of evaluation is irrelevant
  const double late = a.uniform(1000);
  const double early = a.uniform(3);
  CHECK(early == b.uniform(3));
  CHECK(late == b.uniform(1000));
}

TEST_CASE("distinct seeds, streams, and indices give distinct output") {
  CounterRng base(1, Stream::init, 0);
  CHECK(base.bits(0) != CounterRng(2, Stream::init, 0).bits(0));
  CHECK(base.bits(0) != CounterRng(1, Stream::noise, 0).bits(0));
  CHECK(base.bits(0) != CounterRng(1, Stream::scratch, 0).bits(0));
  CHECK(base.bits(0) != CounterRng(1, Stream::init, 1).bits(0));
  CHECK(base.bits(0) != base.bits(1));

  // no collisions across a block of stream indices
  std::set<uint64_t> seen;
  for (uint64_t i = 0; i < 4096; ++i) seen.insert(CounterRng(1, Stream::noise, i).bits(0));
  CHECK(seen.size() == 4096);
}

TEST_CASE("below produces a roughly uniform residue") {
  CounterRng r(5, Stream::scratch, 1);
  std::vector<int> counts(8, 0);
  const int n = 80000;
  for (int i = 0; i < n; ++i) {
    const uint64_t v = r.below(i, 8);
    REQUIRE(v < 8);
    ++counts[v];
  }
  for (int c : counts) CHECK(std::abs(c - n / 8) < 5 * std::sqrt(double(n / 8)));
}
