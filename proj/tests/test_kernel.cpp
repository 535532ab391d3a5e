#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "geoflow/kernel.hpp"
#include "support.hpp"

using namespace geoflow;
using namespace geoflow::testing;

namespace {

// Direct inverse DFT of the transfer function: the kernel's impulse response.
double kernel_sample_direct(const KernelSpec& k, int x, int y) {
  const int nx = k.grid.nx(), ny = k.grid.ny();
  double acc = 0.0;
  for (int ky = 0; ky < ny; ++ky)
    for (int kx = 0; kx < nx; ++kx)
      acc += k.transfer(kx, ky) * std::cos(2 * kPi * (double(kx) * x / nx + double(ky) * y / ny));
  return acc / (double(nx) * ny);
}

// Band-limited random field (|k| <= kmax in each direction).
ScalarField band_limited(const Grid& g, std::mt19937_64& rng, int kmax) {
  std::normal_distribution<double> n(0.0, 1.0);
  ScalarField f(g);
  for (int ky = -kmax; ky <= kmax; ++ky)
    for (int kx = -kmax; kx <= kmax; ++kx) {
      const double a = n(rng), b = n(rng);
      for (int j = 0; j < g.ny(); ++j)
        for (int i = 0; i < g.nx(); ++i) {
          const double ph = 2 * kPi * (double(kx) * i / g.nx() + double(ky) * j / g.ny());
          f[g.index(i, j)] += a * std::cos(ph) + b * std::sin(ph);
        }
    }
  return f;
}

ScalarField unit_sinusoid(const Grid& g, int kx, int ky) {
  auto f = ScalarField::from_function(g, [&](double x, double y) {
    return std::cos(2 * kPi * (kx * x / g.nx() + ky * y / g.ny()));
  });
  f *= 1.0 / l2_norm(f);
  return f;
}

}  // namespace

TEST(Kernel, RejectsNonPositiveSigma) {
  EXPECT_THROW(KernelSpec(Grid(8, 8), 0.0), DomainError);
  EXPECT_THROW(KernelSpec(Grid(8, 8), -1.0), DomainError);
}

TEST(Kernel, TransferIsPositiveEverywhere) {
  KernelSpec k(Grid(32, 32), 2.0);
  for (int j = 0; j < 32; ++j)
    for (int i = 0; i < 32; ++i) EXPECT_GT(k.transfer(i, j), 0.0);
  EXPECT_EQ(k.transfer(0, 0), 1.0);
}

TEST(ApplyK, ZeroAndConstant) {
  Grid g(16, 16);
  KernelSpec k(g, 2.0);
  EXPECT_EQ(apply_K(MomentumField(g), k).max_norm(), 0.0);
  MomentumField m(VectorField(ScalarField(g, 1.5), ScalarField(g, -0.25)));
  auto u = apply_K(m, k);
  for (std::size_t i = 0; i < g.size(); ++i) {
    EXPECT_NEAR(u.x()[i], 1.5, 1e-14);
    EXPECT_NEAR(u.y()[i], -0.25, 1e-14);
  }
}

TEST(ApplyK, ImpulseResponseMatchesDirectSummation) {
  Grid g(32, 32);
  KernelSpec k(g, 2.0);
  ScalarField delta(g);
  delta[g.index(0, 0)] = 1.0;
  auto out = apply_K(delta, k);
  for (int j = 0; j < 32; j += 3)
    for (int i = 0; i < 32; i += 3) EXPECT_NEAR(out.at(i, j), kernel_sample_direct(k, i, j), 1e-14);
  // peak equals the discrete normalization
  EXPECT_NEAR(out.at(0, 0), kernel_sample_direct(k, 0, 0), 1e-15);
}

TEST(ApplyK, ImpulseResponseIsSampledPeriodicGaussian) {
  Grid g(32, 32);
  const double s = 2.0;
  KernelSpec k(g, s);
  ScalarField delta(g);
  delta[g.index(5, 9)] = 1.0;
  auto out = apply_K(delta, k);
  for (int j = 0; j < 32; ++j)
    for (int i = 0; i < 32; ++i) {
      double ref = 0.0;
      for (int a = -2; a <= 2; ++a)
        for (int b = -2; b <= 2; ++b) {
          const double dx = i - 5 + 32.0 * a, dy = j - 9 + 32.0 * b;
          ref += std::exp(-(dx * dx + dy * dy) / (2 * s * s)) / (2 * kPi * s * s);
        }
      EXPECT_NEAR(out.at(i, j), ref, 1e-9);
    }
}

TEST(ApplyK, PreservesMean) {
  Grid g(16, 12);
  KernelSpec k(g, 1.5);
  std::mt19937_64 rng(1);
  auto f = random_field(g, rng);
  auto kf = apply_K(f, k);
  double a = 0, b = 0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    a += f[i];
    b += kf[i];
  }
  EXPECT_NEAR(a, b, 1e-12);
}

TEST(ApplyK, IsSelfAdjoint) {
  Grid g(16, 16);
  KernelSpec k(g, 2.0);
  std::mt19937_64 rng(2);
  for (int t = 0; t < 100; ++t) {
    auto a = random_field(g, rng);
    auto b = random_field(g, rng);
    const double lhs = l2_inner(apply_K(a, k), b);
    const double rhs = l2_inner(a, apply_K(b, k));
    EXPECT_NEAR(lhs, rhs, 1e-10 * std::max(1.0, std::abs(lhs)));
  }
}

TEST(ApplyK, GridMismatchRejected) {
  KernelSpec k(Grid(16, 16), 2.0);
  EXPECT_THROW(apply_K(ScalarField(Grid(8, 8)), k), GridMismatch);
}

TEST(ApplyKInverse, RoundTripOnFullSpectrumAtModerateSigma) {
  // cond(K) = exp(sigma^2 pi^2) on the full spectrum; ~2e4 at sigma = 1.
  Grid g(32, 32);
  KernelSpec k(g, 1.0);
  std::mt19937_64 rng(3);
  auto m = random_vector_field(g, rng);
  auto back = apply_K_inverse(apply_K(MomentumField(m), k), k).field();
  EXPECT_LT(max_abs_diff(back, m) / m.max_norm(), 1e-10);
  auto u = random_vector_field(g, rng);
  auto again = apply_K(apply_K_inverse(u, k), k);
  EXPECT_LT(max_abs_diff(again, u) / u.max_norm(), 1e-10);
}

TEST(ApplyKInverse, DefaultSigmaStaysAccurateInTheInnerProduct) {
  // At sigma = 2 the corner modes of K^ are ~1e-17, so K^{-1} of a computed
  // field is noise-dominated pointwise; paired with a smooth field it is not.
  Grid g(32, 32);
  KernelSpec k(g, 2.0);
  std::mt19937_64 rng(4);
  VectorField m(band_limited(g, rng, 4), band_limited(g, rng, 4));
  VectorField w(band_limited(g, rng, 3), band_limited(g, rng, 3));
  const VectorField u = apply_K(MomentumField(m), k);
  const double direct = l2_inner(m, w);
  EXPECT_NEAR(l2_inner(apply_K_inverse(u, k).field(), w), direct, 1e-10 * std::abs(direct));
  EXPECT_NEAR(v_inner(u, u, k), l2_inner(m, u), 1e-10 * l2_inner(m, u));
}

TEST(ApplyKInverse, ConstantIsUnchanged) {
  Grid g(8, 8);
  KernelSpec k(g, 2.0);
  auto out = apply_K_inverse(ScalarField(g, 4.0), k);
  for (double v : out.values()) EXPECT_NEAR(v, 4.0, 1e-13);
}

TEST(ApplyKInverse, SinusoidIsAmplifiedByInverseTransfer) {
  Grid g(32, 32);
  const double s = 1.0;
  KernelSpec k(g, s);
  for (int kx : {1, 3, 5}) {
    auto f = ScalarField::from_function(g, [&](double x, double) { return std::sin(2 * kPi * kx * x / 32); });
    auto out = apply_K_inverse(f, k);
    const double w = 2 * kPi * kx / 32;
    const double gain = std::exp(s * s * w * w / 2);
    for (std::size_t i = 0; i < f.size(); ++i) EXPECT_NEAR(out[i], gain * f[i], 1e-10 * gain);
  }
}

TEST(VInner, ZeroAndPositive) {
  Grid g(16, 16);
  KernelSpec k(g, 2.0);
  std::mt19937_64 rng(5);
  auto w = smooth_random_field(g, rng, 1.0);
  EXPECT_EQ(v_inner(VectorField(g), w, k), 0.0);
  for (int t = 0; t < 10; ++t) {
    auto u = smooth_random_field(g, rng, 1.0);
    EXPECT_GT(v_inner(u, u, k), 0.0);
  }
}

TEST(VInner, UnitSinusoidCostsInverseTransfer) {
  Grid g(32, 32);
  const double s = 2.0;
  KernelSpec k(g, s);
  for (auto [kx, ky] : {std::pair{1, 0}, std::pair{2, 1}, std::pair{0, 4}}) {
    VectorField u(unit_sinusoid(g, kx, ky), ScalarField(g));
    const double wx = 2 * kPi * kx / 32, wy = 2 * kPi * ky / 32;
    const double expected = std::exp(s * s * (wx * wx + wy * wy) / 2);
    EXPECT_NEAR(v_inner(u, u, k), expected, 1e-12 * expected);
  }
}

TEST(VInner, HigherFrequenciesCostMore) {
  Grid g(32, 32);
  KernelSpec k(g, 2.0);
  double prev = 0.0;
  for (int kx = 0; kx <= 8; ++kx) {
    VectorField u(unit_sinusoid(g, kx, 0), ScalarField(g));
    const double c = v_inner(u, u, k);
    EXPECT_GT(c, prev);
    prev = c;
  }
}

TEST(VInner, ThreeRoutesAgree) {
  Grid g(16, 16);
  KernelSpec k(g, 2.0);
  std::mt19937_64 rng(6);
  for (int t = 0; t < 20; ++t) {
    auto u = smooth_random_field(g, rng, 1.0, 6, 3);
    auto w = smooth_random_field(g, rng, 1.0, 6, 3);
    const double a = v_inner(u, w, k);
    const double b = l2_inner(u, apply_K_inverse(w, k).field());
    const double c = l2_inner(apply_K_inverse(u, k).field(), w);
    const double scale = std::sqrt(v_inner(u, u, k) * v_inner(w, w, k));
    EXPECT_NEAR(a, b, 1e-10 * scale);
    EXPECT_NEAR(a, c, 1e-10 * scale);
  }
}

TEST(VInner, GridMismatchRejected) {
  KernelSpec k(Grid(8, 8), 2.0);
  EXPECT_THROW(v_inner(VectorField(Grid(8, 8)), VectorField(Grid(16, 8)), k), GridMismatch);
}
