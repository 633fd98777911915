#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <memory>
#include <vector>

#include "mfl/cloud.hpp"
#include "mfl/functionals.hpp"

using namespace mfl;

namespace {

ParticleCloud cloud_at(const std::vector<double>& xs, int d = 1) {
  const int n = static_cast<int>(xs.size()) / d;
  ParticleCloud c(n, d, 0);
  for (size_t i = 0; i < xs.size(); ++i) c.data()[i] = xs[i];
  return c;
}

}  // namespace

TEST_CASE("pairwise interaction on hand-checked clouds") {
  const PairwiseInteraction F(1, 1.0, 1.0);
  // both particles at the origin: F = amp/2
  CHECK(F.eval(cloud_at({0.0, 0.0}).measure()) == doctest::Approx(0.5).epsilon(1e-14));
  // {0, 1}: F = 1/2 * mean over pairs of exp(-|xi-xj|^2/2)
  const double w01 = std::exp(-0.5);
  CHECK(F.eval(cloud_at({0.0, 1.0}).measure()) ==
        doctest::Approx(0.5 * (1.0 + 1.0 + w01 + w01) / 4.0).epsilon(1e-14));
  const double ka = 0.0, kb = 1.0;
  CHECK(F.kernel(&ka, &kb) == doctest::Approx(w01));

  // intrinsic derivative at x=0 under {0, 1}: mean of grad_x w(x - y)
  const ParticleCloud c = cloud_at({0.0, 1.0});
  double g = 0.0;
  const double x0 = 0.0;
  F.intrinsic_derivative(c.measure(), &x0, &g);
  CHECK(g == doctest::Approx(0.5 * std::exp(-0.5)).epsilon(1e-14));

  // lifted finite-particle gradient coincides with the intrinsic derivative
  double fp = 0.0;
  finite_particle_gradient(F, c.measure(), 0, &fp);
  CHECK(fp == doctest::Approx(g).epsilon(1e-12));

  // second-order hook returns the kernel itself
  const double a = 0.3, b = -0.7;
  CHECK(F.linear_second_raw(c.measure(), &a, &b) == doctest::Approx(F.kernel(&a, &b)));
}

TEST_CASE("composite expectation on point masses") {
  const CompositeExpectation F = CompositeExpectation::default_1d(1.0, 0.0);
  // tanh(0) = 0 hits the target exactly
  CHECK(F.eval(cloud_at({0.0}).measure()) == doctest::Approx(0.0).epsilon(1e-15));
  // point mass at x: F = (tanh x)^2
  const double x = 0.8;
  CHECK(F.eval(cloud_at({x}).measure()) == doctest::Approx(std::tanh(x) * std::tanh(x)).epsilon(1e-14));

  // linear derivative: 2 (E tanh - target) tanh(x); check the raw version up
  // to the zero-mean normalization by differencing two probe points
  const ParticleCloud m = cloud_at({0.5, -0.2, 1.0});
  std::vector<double> fm = F.feature_mean(m.measure());
  const double p1 = 0.3, p2 = -0.9;
  const double raw_diff =
      F.linear_derivative_raw(m.measure(), &p1) - F.linear_derivative_raw(m.measure(), &p2);
  CHECK(raw_diff == doctest::Approx(2.0 * fm[0] * (std::tanh(p1) - std::tanh(p2))).epsilon(1e-12));

  // zero-mean normalization integrates to zero against m
  const double mean_ld = integrate(m.measure(), [&](const double* y) { return linear_derivative(F, m.measure(), y); });
  CHECK(std::abs(mean_ld) < 1e-14);
}

TEST_CASE("zero functional is identically zero") {
  const ZeroFunctional F(2);
  const ParticleCloud c = cloud_at({0.1, 0.2, -0.5, 1.2}, 2);
  CHECK(F.eval(c.measure()) == 0.0);
  double g[2] = {1.0, 1.0};
  F.intrinsic_derivative(c.measure(), c.point(0), g);
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 0.0);
  CHECK(F.linear_derivative_bound() == 0.0);
}

TEST_CASE("finite-difference validation passes for every family") {
  const auto families = std::vector<std::shared_ptr<MeanFieldFunctional>>{
      std::make_shared<ZeroFunctional>(1),
      std::make_shared<CompositeExpectation>(CompositeExpectation::default_1d()),
      std::make_shared<PairwiseInteraction>(2, 1.0, 0.7),
      std::make_shared<TwoLayerNetLoss>(TwoLayerNetLoss::default_task()),
  };
  for (const auto& F : families) {
    const DerivativeReport rep = validate_derivatives(*F, 7);
    INFO("family ", F->name(), " worst rel err ", rep.worst());
    CHECK(rep.all_pass());
    CHECK(rep.worst() < 1e-4);
    CHECK(!rep.checks.empty());
  }
}

TEST_CASE("a flipped intrinsic derivative is caught by name") {
  const auto base = std::make_shared<CompositeExpectation>(CompositeExpectation::default_1d());
  const FlippedIntrinsicSign F(base);
  const DerivativeReport rep = validate_derivatives(F, 7);
  CHECK(!rep.all_pass());
  bool intrinsic_failed = false;
  for (const auto& c : rep.checks)
    if (!c.pass && c.name.find("intrinsic") != std::string::npos) intrinsic_failed = true;
  CHECK(intrinsic_failed);
}

TEST_CASE("batched derivatives are bit-identical under both execution policies") {
  const auto families = std::vector<std::shared_ptr<MeanFieldFunctional>>{
      std::make_shared<CompositeExpectation>(CompositeExpectation::default_1d()),
      std::make_shared<PairwiseInteraction>(2, 0.8, 1.2),
      std::make_shared<TwoLayerNetLoss>(TwoLayerNetLoss::default_task()),
  };
  for (const auto& F : families) {
    const int d = F->dim();
    const ParticleCloud m = sample_cloud(DistributionSpec::gaussian(0.2, 1.0, d), 97, 5);
    const ParticleCloud probes = sample_cloud(DistributionSpec::gaussian(-0.1, 2.0, d), 33, 6);
    std::vector<double> a(33 * d, -1.0), b(33 * d, -2.0);
    F->dmf_batch(m.measure(), probes.data(), 33, a.data(), Exec::serial);
    F->dmf_batch(m.measure(), probes.data(), 33, b.data(), Exec::parallel);
    for (size_t i = 0; i < a.size(); ++i) REQUIRE(a[i] == b[i]);

    // batch agrees with one-at-a-time evaluation
    std::vector<double> one(d);
    for (int i = 0; i < 33; ++i) {
      F->intrinsic_derivative(m.measure(), probes.point(i), one.data());
      for (int k = 0; k < d; ++k) REQUIRE(a[static_cast<size_t>(i) * d + k] == doctest::Approx(one[k]).epsilon(1e-12));
    }

    std::vector<double> la(33), lb(33);
    F->dfdm_batch(m.measure(), probes.data(), 33, la.data(), Exec::serial);
    F->dfdm_batch(m.measure(), probes.data(), 33, lb.data(), Exec::parallel);
    for (int i = 0; i < 33; ++i) {
      REQUIRE(la[i] == lb[i]);
      REQUIRE(la[i] == doctest::Approx(F->linear_derivative_raw(m.measure(), probes.point(i))).epsilon(1e-12));
    }
  }
}

TEST_CASE("declared derivative bounds hold on random probes") {
  const auto families = std::vector<std::shared_ptr<MeanFieldFunctional>>{
      std::make_shared<CompositeExpectation>(CompositeExpectation::default_1d()),
      std::make_shared<PairwiseInteraction>(1, 1.3, 0.9),
      std::make_shared<TwoLayerNetLoss>(TwoLayerNetLoss::default_task()),
  };
  for (const auto& F : families) {
    const int d = F->dim();
    const double bound = F->linear_derivative_bound();
    CHECK(bound > 0.0);
    const ParticleCloud m = sample_cloud(DistributionSpec::gaussian(0.0, 4.0, d), 64, 11);
    const ParticleCloud probes = sample_cloud(DistributionSpec::uniform(-6.0, 6.0, d), 200, 12);
    for (int i = 0; i < probes.size(); ++i)
      REQUIRE(std::abs(F->linear_derivative_raw(m.measure(), probes.point(i))) <= bound * (1.0 + 1e-12));
  }
}

TEST_CASE("weighted measures must be normalized") {
  const PairwiseInteraction F(1);
  const double pts[2] = {0.0, 1.0};
  const double bad_w[2] = {0.7, 0.7};
  const MeasureRef m{pts, bad_w, 2, 1, -1};
  CHECK_THROWS(F.eval(m));
}

TEST_CASE("two-layer loss vanishes when the network interpolates") {
  // dataset where f_k = 0: the zero-output network (c = 0) has zero loss
  const TwoLayerNetLoss F({{0.0}, {1.0}}, {0.0, 0.0});
  ParticleCloud c(4, 3, 0);
  for (int i = 0; i < 4; ++i) {
    c.point(i)[0] = 0.0;  // output weight
    c.point(i)[1] = 0.3 * i;
    c.point(i)[2] = -0.1 * i;
  }
  CHECK(F.eval(c.measure()) == doctest::Approx(0.0).epsilon(1e-14));
}
