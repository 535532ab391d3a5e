#pragma once

// Gaussian smoothing operator K on the periodic grid, its inverse, and the
// V-inner product <u, w>_V = <K^{-1} u, w>_{L2}.
//
// K is applied as a Fourier multiplier
//     K^(w) = exp(-sigma^2 |w|^2 / 2),   w = 2 pi k / n  (radians per cell)
// which is strictly positive, so K^{-1} exists on the grid.

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <utility>

#include "grid.hpp"

namespace geoflow {

struct KernelSpec {
  KernelSpec(const Grid& g, double sigma_k) : grid(g), sigma(sigma_k) {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw DomainError("kernel sigma must be positive");
  }

  Grid grid;
  double sigma;

  /// Transfer function at integer frequency indices (any representative).
  double transfer(long long kx, long long ky) const noexcept {
    const double wx = angular(kx, grid.nx());
    const double wy = angular(ky, grid.ny());
    return std::exp(-0.5 * sigma * sigma * (wx * wx + wy * wy));
  }

  static double angular(long long k, int n) noexcept {
    long long r = Grid::wrap(k, n);
    if (2 * r > n) r -= n;
    return 2.0 * std::numbers::pi * double(r) / double(n);
  }
};

/// Momentum density (the metric dual of a velocity field).
class MomentumField {
public:
  explicit MomentumField(const Grid& g) : v_(g) {}
  explicit MomentumField(VectorField v) : v_(std::move(v)) {}

  const Grid& grid() const noexcept { return v_.grid(); }
  const VectorField& field() const noexcept { return v_; }
  VectorField& field() noexcept { return v_; }

private:
  VectorField v_;
};

namespace detail {

// One r2c/c2r plan pair per grid shape and thread, with private buffers.
class FourierPlan {
public:
  FourierPlan(int nx, int ny) : nx_(nx), ny_(ny), nc_(std::size_t(ny) * (nx / 2 + 1)) {
    real_ = fftw_alloc_real(std::size_t(nx) * ny);
    spec_ = fftw_alloc_complex(nc_);
    std::lock_guard<std::mutex> lock(planner_mutex());
    forward_ = fftw_plan_dft_r2c_2d(ny, nx, real_, spec_, FFTW_ESTIMATE);
    backward_ = fftw_plan_dft_c2r_2d(ny, nx, spec_, real_, FFTW_ESTIMATE);
  }
  ~FourierPlan() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(backward_);
    fftw_free(real_);
    fftw_free(spec_);
  }
  FourierPlan(const FourierPlan&) = delete;
  FourierPlan& operator=(const FourierPlan&) = delete;

  template <class Multiplier>
  void filter(std::span<const double> in, std::span<double> out, Multiplier&& m) {
    std::copy(in.begin(), in.end(), real_);
    fftw_execute(forward_);
    const int nh = nx_ / 2 + 1;
    const double norm = 1.0 / (double(nx_) * ny_);
    for (int j = 0; j < ny_; ++j)
      for (int i = 0; i < nh; ++i) {
        const double s = m(i, j) * norm;
        fftw_complex& c = spec_[std::size_t(j) * nh + i];
        c[0] *= s;
        c[1] *= s;
      }
    fftw_execute(backward_);
    std::copy(real_, real_ + out.size(), out.begin());
  }

  static FourierPlan& get(int nx, int ny) {
    thread_local std::map<std::pair<int, int>, std::unique_ptr<FourierPlan>> cache;
    auto& slot = cache[{nx, ny}];
    if (!slot) slot = std::make_unique<FourierPlan>(nx, ny);
    return *slot;
  }

private:
  static std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
  }

  int nx_, ny_;
  std::size_t nc_;
  double* real_ = nullptr;
  fftw_complex* spec_ = nullptr;
  fftw_plan forward_ = nullptr;
  fftw_plan backward_ = nullptr;
};

inline ScalarField kernel_filter(const ScalarField& f, const KernelSpec& k, bool inverse) {
  require_same_grid(f.grid(), k.grid, "kernel");
  ScalarField out(f.grid());
  auto& plan = FourierPlan::get(f.grid().nx(), f.grid().ny());
  if (inverse) {
    plan.filter(f.values(), out.values(), [&](int i, int j) { return 1.0 / k.transfer(i, j); });
  } else {
    plan.filter(f.values(), out.values(), [&](int i, int j) { return k.transfer(i, j); });
  }
  return out;
}

}  // namespace detail

inline ScalarField apply_K(const ScalarField& f, const KernelSpec& k) {
  return detail::kernel_filter(f, k, false);
}

inline VectorField apply_K(const MomentumField& m, const KernelSpec& k) {
  return VectorField(apply_K(m.field().x(), k), apply_K(m.field().y(), k));
}

inline ScalarField apply_K_inverse(const ScalarField& f, const KernelSpec& k) {
  return detail::kernel_filter(f, k, true);
}

inline MomentumField apply_K_inverse(const VectorField& u, const KernelSpec& k) {
  return MomentumField(VectorField(apply_K_inverse(u.x(), k), apply_K_inverse(u.y(), k)));
}

inline double v_inner(const VectorField& u, const VectorField& w, const KernelSpec& k) {
  require_same_grid(u.grid(), w.grid(), "v_inner");
  return l2_inner(apply_K_inverse(u, k).field(), w);
}

}  // namespace geoflow
