#pragma once

// Synthetic inputs and reference computations shared by the experiment
// suite and the tests: Gaussian blobs, smooth seeded random fields, a
// fine-step particle trace, and log-log slope fitting.

#include <cmath>
#include <numbers>
#include <vector>

#include "grid.hpp"
#include "rng.hpp"

namespace geoflow {

inline ScalarField gaussian_blob(const Grid& g, double cx, double cy, double width, double amp = 1.0) {
  return ScalarField::from_function(g, [&](double x, double y) {
    const double dx = x - cx, dy = y - cy;
    return amp * std::exp(-(dx * dx + dy * dy) / (2.0 * width * width));
  });
}

/// Sum of `count` periodic modes with wavenumbers |k| <= max_freq per axis,
/// normal amplitudes and uniform phases, scaled so the largest vector has
/// length max_len.
inline VectorField smooth_field(const Grid& g, Rng& rng, double max_len, int count = 4, int max_freq = 1) {
  struct Mode {
    int kx, ky;
    double ax, ay, phase;
  };
  std::vector<Mode> modes;
  const auto span = std::uint64_t(2 * max_freq + 1);
  while (int(modes.size()) < count) {
    const int kx = int(rng.below(span)) - max_freq;
    const int ky = int(rng.below(span)) - max_freq;
    const double ax = rng.normal(), ay = rng.normal();
    const double ph = rng.uniform(0.0, 2.0 * std::numbers::pi);
    if (kx == 0 && ky == 0) continue;
    modes.push_back({kx, ky, ax, ay, ph});
  }
  VectorField v = VectorField::from_function(g, [&](double x, double y) {
    Vec2 w;
    for (const auto& m : modes) {
      const double a = 2.0 * std::numbers::pi * (m.kx * x / g.nx() + m.ky * y / g.ny()) + m.phase;
      w.x += m.ax * std::sin(a);
      w.y += m.ay * std::cos(a);
    }
    return w;
  });
  v *= max_len / v.max_norm();
  return v;
}

/// Independent standard-normal values scaled by `scale`.
inline ScalarField noise_field(const Grid& g, Rng& rng, double scale = 1.0) {
  ScalarField f(g);
  for (auto& x : f.values()) x = scale * rng.normal();
  return f;
}

/// Forward Euler particle trace through the bilinear interpolant of v.
inline Transform euler_flow(const VectorField& v, int substeps) {
  const Grid& g = v.grid();
  VectorField d(g);
  const double h = 1.0 / substeps;
  for (std::size_t k = 0; k < g.size(); ++k) {
    const Point p0{double(k % std::size_t(g.nx())), double(k / std::size_t(g.nx()))};
    Point p = p0;
    for (int s = 0; s < substeps; ++s) {
      const Vec2 w = interpolate(v, p);
      p.x += h * w.x;
      p.y += h * w.y;
    }
    d.set(k, {p.x - p0.x, p.y - p0.y});
  }
  return Transform(std::move(d));
}

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = double(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double lx = std::log(xs[i]), ly = std::log(ys[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace geoflow
