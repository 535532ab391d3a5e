#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "geoflow/flow.hpp"
#include "support.hpp"

using namespace geoflow;
using namespace geoflow::testing;

namespace {

TimeVaryingVelocity random_velocity(const Grid& g, std::mt19937_64& rng, int T, double max_len) {
  std::vector<VectorField> f;
  const VectorField a = smooth_random_field(g, rng, max_len, 4, 1);
  const VectorField b = smooth_random_field(g, rng, max_len, 4, 1);
  for (int j = 0; j < T; ++j) {
    const double s = (j + 0.5) / T;
    VectorField v = a;
    v *= 1.0 - s;
    v.axpy(s, b);
    f.push_back(std::move(v));
  }
  return TimeVaryingVelocity(std::move(f));
}

}  // namespace

TEST(TimeVaryingVelocity, StepsAndDt) {
  TimeVaryingVelocity u(Grid(8, 8), 32);
  EXPECT_EQ(u.steps(), 32);
  EXPECT_DOUBLE_EQ(u.dt() * u.steps(), 1.0);
  EXPECT_THROW(TimeVaryingVelocity(Grid(8, 8), 0), DomainError);
  std::vector<VectorField> mixed{VectorField(Grid(8, 8)), VectorField(Grid(8, 9))};
  EXPECT_THROW(TimeVaryingVelocity{mixed}, GridMismatch);
}

TEST(IntegrateFlow, ZeroVelocityIsIdentity) {
  Grid g(16, 16);
  TimeVaryingVelocity u(g, 8);
  for (double s : {0.0, 0.25, 1.0})
    for (double t : {0.0, 0.5, 1.0}) EXPECT_EQ(integrate_flow(u, s, t), Transform::identity(g));
}

TEST(IntegrateFlow, SameTimeIsIdentity) {
  Grid g(16, 16);
  std::mt19937_64 rng(1);
  auto u = random_velocity(g, rng, 8, 1.0);
  EXPECT_EQ(integrate_flow(u, 0.375, 0.375), Transform::identity(g));
}

TEST(IntegrateFlow, ConstantVelocityIsTranslation) {
  Grid g(16, 16);
  const double c = 1.7;
  auto u = TimeVaryingVelocity::stationary(VectorField(ScalarField(g, c), ScalarField(g)), 32);
  const Transform fwd = integrate_flow(u, 0, 1);
  const Transform back = integrate_flow(u, 1, 0);
  for (std::size_t k = 0; k < g.size(); ++k) {
    EXPECT_NEAR(fwd.displacement()[k].x, c, 1e-12);
    EXPECT_NEAR(fwd.displacement()[k].y, 0.0, 1e-12);
    EXPECT_NEAR(back.displacement()[k].x, -c, 1e-12);
  }
}

TEST(IntegrateFlow, RejectsOffBoundaryTimes) {
  TimeVaryingVelocity u(Grid(8, 8), 4);
  EXPECT_THROW(integrate_flow(u, 0.0, 0.3), DomainError);
  EXPECT_THROW(integrate_flow(u, -0.25, 0.5), DomainError);
  EXPECT_THROW(integrate_flow(u, 0.0, 1.25), DomainError);
  EXPECT_THROW(integrate_flow(u, std::nan(""), 0.5), DomainError);
  EXPECT_NO_THROW(integrate_flow(u, 0.25, 0.75));
}

TEST(IntegrateFlow, SemigroupAcrossTheMidpoint) {
  Grid g(32, 32);
  for (int seed = 0; seed < 4; ++seed) {
    std::mt19937_64 rng(seed);
    auto u = random_velocity(g, rng, 32, 2.0);
    const Transform whole = integrate_flow(u, 0, 1);
    const Transform split = compose(integrate_flow(u, 0.5, 1), integrate_flow(u, 0, 0.5));
    EXPECT_LT(max_displacement_gap(whole, split), 0.02) << "seed " << seed;
  }
}

TEST(IntegrateFlow, BackwardUndoesForward) {
  Grid g(32, 32);
  std::mt19937_64 rng(9);
  auto u = random_velocity(g, rng, 32, 1.0);
  const Transform round = compose(integrate_flow(u, 1, 0), integrate_flow(u, 0, 1));
  EXPECT_LT(round.displacement().max_norm(), 0.05);
}

TEST(IntegrateFlow, IncrementalFlowsMatchDirectIntegration) {
  Grid g(16, 16);
  std::mt19937_64 rng(4);
  auto u = random_velocity(g, rng, 8, 1.0);
  const auto start = flows_to_start(u);
  const auto end = flows_to_end(u);
  ASSERT_EQ(start.size(), 9u);
  for (int j = 0; j <= 8; ++j) {
    EXPECT_LT(max_displacement_gap(start[std::size_t(j)], integrate_flow_steps(u, j, 0)), 1e-12);
    EXPECT_LT(max_displacement_gap(end[std::size_t(j)], integrate_flow_steps(u, j, 8)), 1e-12);
  }
}

TEST(IntegrateFlow, StationaryFieldAgreesWithExponential) {
  Grid g(32, 32);
  for (int seed = 0; seed < 4; ++seed) {
    std::mt19937_64 rng(100 + seed);
    const VectorField v = smooth_random_field(g, rng, 2.0, 4, 1);
    const auto u = TimeVaryingVelocity::stationary(v, 64);
    EXPECT_LT(max_displacement_gap(integrate_flow(u, 0, 1), svf_exp(v)), 0.05) << "seed " << seed;
  }
}

TEST(SvfExp, ZeroIsExactIdentity) {
  Grid g(16, 16);
  EXPECT_EQ(svf_exp(VectorField(g)), Transform::identity(g));
  EXPECT_EQ(svf_exp(VectorField(g), 0), Transform::identity(g));
}

TEST(SvfExp, ConstantFieldIsTranslation) {
  Grid g(16, 16);
  for (double c : {0.3, 2.0, -3.75}) {
    const Transform t = svf_exp(VectorField(ScalarField(g, c), ScalarField(g)));
    for (std::size_t k = 0; k < g.size(); ++k) {
      EXPECT_NEAR(t.displacement()[k].x, c, 1e-10);
      EXPECT_NEAR(t.displacement()[k].y, 0.0, 1e-10);
    }
  }
}

TEST(SvfExp, AutomaticSquaringsRespectTheBaseStep) {
  Grid g(16, 16);
  std::mt19937_64 rng(3);
  const VectorField v = smooth_random_field(g, rng, 2.0);
  const int n = auto_squarings(v);
  EXPECT_LE(v.max_norm() / std::ldexp(1.0, n), kAutoBaseStep);
  EXPECT_GT(v.max_norm() / std::ldexp(1.0, n - 1), kAutoBaseStep);
  EXPECT_EQ(auto_squarings(VectorField(g)), 0);
}

TEST(SvfExp, RejectsCoarseBaseStepAndBadInput) {
  Grid g(16, 16);
  const VectorField v(ScalarField(g, 2.0), ScalarField(g));
  EXPECT_THROW(svf_exp(v, 1), DomainError);
  EXPECT_NO_THROW(svf_exp(v, 2));
  EXPECT_THROW(svf_exp(v, -1), DomainError);
  VectorField bad(g);
  bad.x()[3] = std::nan("");
  EXPECT_THROW(svf_exp(bad), DomainError);
}

TEST(SvfExp, HalvesComposeToWhole) {
  Grid g(32, 32);
  for (int seed = 0; seed < 4; ++seed) {
    std::mt19937_64 rng(200 + seed);
    const VectorField v = smooth_random_field(g, rng, 2.0, 4, 1);
    VectorField half = v;
    half *= 0.5;
    const Transform h = svf_exp(half);
    EXPECT_LT(max_displacement_gap(compose(h, h), svf_exp(v)), 1e-6);
  }
}

TEST(SvfExp, InverseConsistency) {
  Grid g(32, 32);
  for (int seed = 0; seed < 8; ++seed) {
    std::mt19937_64 rng(300 + seed);
    const VectorField v = smooth_random_field(g, rng, 2.0, 4, 1);
    const Transform res = compose(svf_exp(v), svf_exp(-v));
    EXPECT_LT(res.displacement().max_norm(), 0.05) << "seed " << seed;
  }
}

TEST(SvfExp, ConvergesTowardsFineEulerWithSquarings) {
  // The gap to a 1024-step particle trace shrinks with n until the bilinear
  // resampling floor is reached; it never grows beyond the coarse-step value.
  Grid g(32, 32);
  std::mt19937_64 rng(400);
  const VectorField v = smooth_random_field(g, rng, 2.0, 4, 1);
  const Transform ref = euler_flow(v, 1024);
  const double coarse = max_displacement_gap(svf_exp(v, 2), ref);
  const double fine = max_displacement_gap(svf_exp(v), ref);
  EXPECT_LT(fine, 0.5 * coarse);
  EXPECT_LT(fine, 0.02);
}

TEST(SvfExp, SmallFieldMatchesEulerClosely) {
  // Interpolation error scales with the displacement curvature, so a small
  // field reaches the fine-Euler oracle to high accuracy.
  Grid g(32, 32);
  std::mt19937_64 rng(401);
  const VectorField v = smooth_random_field(g, rng, 0.25, 4, 1);
  EXPECT_LT(max_displacement_gap(svf_exp(v), euler_flow(v, 1024)), 1e-3);
}
