#pragma once

// Test fixtures: synthetic images, smooth random fields, and small numeric
// helpers shared by the unit and acceptance suites.

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "geoflow/grid.hpp"
#include "geoflow/synthetic.hpp"

namespace geoflow::testing {

inline constexpr double kPi = std::numbers::pi;

/// Sum of a few low-frequency periodic modes with random amplitudes/phases.
struct SmoothMode {
  int kx, ky;
  double ax, ay, phase;
};

inline std::vector<SmoothMode> random_modes(std::mt19937_64& rng, int count, int max_freq) {
  std::uniform_int_distribution<int> freq(-max_freq, max_freq);
  std::normal_distribution<double> amp(0.0, 1.0);
  std::uniform_real_distribution<double> ph(0.0, 2.0 * kPi);
  std::vector<SmoothMode> modes;
  while (int(modes.size()) < count) {
    SmoothMode m{freq(rng), freq(rng), amp(rng), amp(rng), ph(rng)};
    if (m.kx == 0 && m.ky == 0) continue;
    modes.push_back(m);
  }
  return modes;
}

inline Vec2 eval_modes(const std::vector<SmoothMode>& modes, const Grid& g, double x, double y) {
  Vec2 v;
  for (const auto& m : modes) {
    const double a = 2.0 * kPi * (m.kx * x / g.nx() + m.ky * y / g.ny()) + m.phase;
    v.x += m.ax * std::sin(a);
    v.y += m.ay * std::cos(a);
  }
  return v;
}

/// Smooth random vector field scaled so that its largest vector has length max_len.
inline VectorField smooth_random_field(const Grid& g, std::mt19937_64& rng, double max_len,
                                       int count = 4, int max_freq = 2) {
  const auto modes = random_modes(rng, count, max_freq);
  VectorField v = VectorField::from_function(g, [&](double x, double y) { return eval_modes(modes, g, x, y); });
  v *= max_len / v.max_norm();
  return v;
}

inline ScalarField random_field(const Grid& g, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  ScalarField f(g);
  for (auto& x : f.values()) x = n(rng);
  return f;
}

inline VectorField random_vector_field(const Grid& g, std::mt19937_64& rng, double scale = 1.0) {
  return VectorField(random_field(g, rng, scale), random_field(g, rng, scale));
}

inline double max_abs_diff(const ScalarField& a, const ScalarField& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

inline double max_abs_diff(const VectorField& a, const VectorField& b) {
  return std::max(max_abs_diff(a.x(), b.x()), max_abs_diff(a.y(), b.y()));
}

}  // namespace geoflow::testing
