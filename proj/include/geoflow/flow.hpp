#pragma once

// Transformations generated by velocity fields: time-varying flows g_{s,t}
// (first-order semi-Lagrangian composition) and the stationary-field group
// exponential (scaling and squaring).

#include <cmath>
#include <optional>
#include <vector>

#include "grid.hpp"

namespace geoflow {

class TimeVaryingVelocity {
public:
  /// T zero fields.
  TimeVaryingVelocity(const Grid& grid, int steps) : fields_(check_steps(steps), VectorField(grid)) {}

  explicit TimeVaryingVelocity(std::vector<VectorField> fields) : fields_(std::move(fields)) {
    if (fields_.empty()) throw DomainError("time-varying velocity needs at least one step");
    for (const auto& f : fields_) require_same_grid(f.grid(), fields_.front().grid(), "velocity");
  }

  /// u(t) = v at every step.
  static TimeVaryingVelocity stationary(const VectorField& v, int steps) {
    return TimeVaryingVelocity(std::vector<VectorField>(check_steps(steps), v));
  }

  const Grid& grid() const noexcept { return fields_.front().grid(); }
  int steps() const noexcept { return int(fields_.size()); }
  double dt() const noexcept { return 1.0 / double(fields_.size()); }

  const VectorField& operator[](int j) const { return fields_.at(std::size_t(j)); }
  VectorField& operator[](int j) { return fields_.at(std::size_t(j)); }

  auto begin() const noexcept { return fields_.begin(); }
  auto end() const noexcept { return fields_.end(); }
  auto begin() noexcept { return fields_.begin(); }
  auto end() noexcept { return fields_.end(); }

  /// this += s * o, step by step
  TimeVaryingVelocity& axpy(double s, const TimeVaryingVelocity& o) {
    if (o.steps() != steps()) throw GridMismatch("velocity axpy: step counts differ");
    for (int j = 0; j < steps(); ++j) fields_[std::size_t(j)].axpy(s, o[j]);
    return *this;
  }

  bool all_finite() const noexcept {
    for (const auto& f : fields_)
      if (!f.all_finite()) return false;
    return true;
  }

private:
  static std::size_t check_steps(int steps) {
    if (steps < 1) throw DomainError("time-varying velocity needs at least one step");
    return std::size_t(steps);
  }

  std::vector<VectorField> fields_;
};

namespace detail {

inline Transform small_step(const VectorField& u, double scale) {
  VectorField d = u;
  d *= scale;
  return Transform(std::move(d));
}

inline int time_to_step(double t, int steps) {
  if (!std::isfinite(t) || t < -1e-12 || t > 1.0 + 1e-12) {
    throw DomainError("flow time outside [0, 1]");
  }
  const double scaled = t * steps;
  const double r = std::round(scaled);
  if (std::abs(scaled - r) > 1e-9) throw DomainError("flow time is not on a step boundary");
  return int(r);
}

}  // namespace detail

/// g_{a,b} between step boundaries a and b (integer step indices).
inline Transform integrate_flow_steps(const TimeVaryingVelocity& u, int a, int b) {
  const int T = u.steps();
  if (a < 0 || b < 0 || a > T || b > T) throw DomainError("flow step index out of range");
  Transform g = Transform::identity(u.grid());
  const double dt = u.dt();
  if (b > a) {
    for (int j = b - 1; j >= a; --j) g = compose(g, detail::small_step(u[j], dt));
  } else {
    for (int j = b; j < a; ++j) g = compose(g, detail::small_step(u[j], -dt));
  }
  return g;
}

/// g_{s,t}: carries a point at time s to its position at time t.
inline Transform integrate_flow(const TimeVaryingVelocity& u, double s, double t) {
  return integrate_flow_steps(u, detail::time_to_step(s, u.steps()),
                              detail::time_to_step(t, u.steps()));
}

/// g_{j,0} for every boundary j = 0..T, built incrementally.
inline std::vector<Transform> flows_to_start(const TimeVaryingVelocity& u) {
  std::vector<Transform> out;
  out.reserve(std::size_t(u.steps()) + 1);
  out.push_back(Transform::identity(u.grid()));
  for (int j = 0; j < u.steps(); ++j)
    out.push_back(compose(out.back(), detail::small_step(u[j], -u.dt())));
  return out;
}

/// g_{j,1} for every boundary j = 0..T.
inline std::vector<Transform> flows_to_end(const TimeVaryingVelocity& u) {
  const int T = u.steps();
  std::vector<Transform> out(std::size_t(T) + 1, Transform::identity(u.grid()));
  for (int j = T - 1; j >= 0; --j)
    out[std::size_t(j)] = compose(out[std::size_t(j) + 1], detail::small_step(u[j], u.dt()));
  return out;
}

/// Largest admissible base step of scaling and squaring, in cells.
inline constexpr double kMaxBaseStep = 0.5;
/// Base step targeted by the automatic choice. The first-order base step
/// contributes an error that halves with every extra squaring until the
/// interpolation floor of the composition is reached.
inline constexpr double kAutoBaseStep = 1.0 / 32.0;

/// Smallest n with max|v| / 2^n <= limit.
inline int squarings_for(const VectorField& v, double limit) {
  double m = v.max_norm();
  int n = 0;
  while (m > limit && n < 60) {
    m *= 0.5;
    ++n;
  }
  return n;
}

inline int auto_squarings(const VectorField& v) { return squarings_for(v, kAutoBaseStep); }

/// Group exponential of a stationary velocity by scaling and squaring.
/// std::nullopt selects the number of squarings automatically; an explicit
/// count must bring the base step within kMaxBaseStep.
inline Transform svf_exp(const VectorField& v, std::optional<int> n_squarings = std::nullopt) {
  if (!v.all_finite()) throw DomainError("svf_exp: non-finite velocity field");
  const int n = n_squarings.value_or(auto_squarings(v));
  if (n < 0) throw DomainError("svf_exp: negative number of squarings");
  if (n < squarings_for(v, kMaxBaseStep))
    throw DomainError("svf_exp: base step exceeds half a cell; use more squarings");
  Transform g = detail::small_step(v, std::ldexp(1.0, -n));
  for (int i = 0; i < n; ++i) g = compose(g, g);
  return g;
}

/// max over nodes of |d_a - d_b|
inline double max_displacement_gap(const Transform& a, const Transform& b) {
  require_same_grid(a.grid(), b.grid(), "displacement gap");
  double m = 0.0;
  const auto& da = a.displacement();
  const auto& db = b.displacement();
  for (std::size_t k = 0; k < da.size(); ++k)
    m = std::max(m, std::hypot(da.x()[k] - db.x()[k], da.y()[k] - db.y()[k]));
  return m;
}

}  // namespace geoflow
