#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "mfl/kernels.hpp"
#include "mfl/rng.hpp"

using namespace mfl;

TEST_CASE("parallel and serial loops write the same disjoint slots") {
  const int n = 10000;
  std::vector<double> serial(n), parallel(n);
  CounterRng r(11, Stream::scratch, 0);
  auto body = [&](std::vector<double>& out) {
    return [&out, &r](int i) { out[i] = std::sin(0.1 * i) + r.normal(i); };
  };
  parallel_for(Exec::serial, n, body(serial));
  parallel_for(Exec::parallel, n, body(parallel));
  for (int i = 0; i < n; ++i) REQUIRE(serial[i] == parallel[i]);
}

TEST_CASE("buffered reduction is identical under both policies") {
  const int n = 4096;
  auto reduce = [&](Exec policy) {
    std::vector<double> buf(n);
    parallel_for(policy, n, [&](int i) { buf[i] = 1.0 / (1.0 + i * i); });
    double acc = 0.0;
    for (double v : buf) acc += v;  // serial combine keeps the result policy-independent
    return acc;
  };
  CHECK(reduce(Exec::serial) == reduce(Exec::parallel));
}

TEST_CASE("empty and single-element ranges work") {
  int hits = 0;
  parallel_for(Exec::parallel, 0, [&](int) { ++hits; });
  CHECK(hits == 0);
  parallel_for(Exec::serial, 1, [&](int i) { hits += i + 1; });
  CHECK(hits == 1);
}

TEST_CASE("thread controls stay sane") {
  CHECK(max_threads() >= 1);
  set_threads(2);
  CHECK(max_threads() >= 1);
  set_threads(0);  // no-op request
  CHECK(max_threads() >= 1);
}
