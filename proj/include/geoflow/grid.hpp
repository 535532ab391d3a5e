#pragma once

// Periodic 2-D grid, scalar/vector fields, displacement transforms and the
// differential operators the registration modules are built on.
//
// Conventions
// -----------
//   node (i, j) sits at continuous coordinate (i, j), in cells
//   storage is row-major: index = j * nx + i
//   every index is taken modulo (nx, ny)

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"

namespace geoflow {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

class Grid {
public:
  Grid(int nx, int ny, double spacing = 1.0) : nx_(nx), ny_(ny), spacing_(spacing) {
    if (nx < 4 || ny < 4) {
      throw DomainError("grid needs at least 4x4 cells, got " + std::to_string(nx) + "x" +
                        std::to_string(ny));
    }
    if (!(spacing > 0.0) || !std::isfinite(spacing)) {
      throw DomainError("grid spacing must be positive and finite");
    }
  }

  int nx() const noexcept { return nx_; }
  int ny() const noexcept { return ny_; }
  double spacing() const noexcept { return spacing_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(nx_) * ny_; }

  static int wrap(long long i, int n) noexcept {
    long long r = i % n;
    return static_cast<int>(r < 0 ? r + n : r);
  }

  std::size_t index(long long i, long long j) const noexcept {
    return static_cast<std::size_t>(wrap(j, ny_)) * nx_ + wrap(i, nx_);
  }

  bool operator==(const Grid&) const = default;

private:
  int nx_;
  int ny_;
  double spacing_;
};

inline void require_same_grid(const Grid& a, const Grid& b, const char* op) {
  if (!(a == b)) throw GridMismatch(std::string(op) + ": operands live on different grids");
}

class ScalarField {
public:
  explicit ScalarField(const Grid& grid, double fill = 0.0) : grid_(grid), v_(grid.size(), fill) {}

  ScalarField(const Grid& grid, std::vector<double> values) : grid_(grid), v_(std::move(values)) {
    if (v_.size() != grid_.size()) throw GridMismatch("scalar field: value count does not match grid");
  }

  template <class F>
  static ScalarField from_function(const Grid& grid, F&& f) {
    ScalarField out(grid);
    for (int j = 0; j < grid.ny(); ++j)
      for (int i = 0; i < grid.nx(); ++i) out.v_[grid.index(i, j)] = f(double(i), double(j));
    return out;
  }

  const Grid& grid() const noexcept { return grid_; }
  std::size_t size() const noexcept { return v_.size(); }

  double operator[](std::size_t k) const noexcept { return v_[k]; }
  double& operator[](std::size_t k) noexcept { return v_[k]; }
  double at(long long i, long long j) const noexcept { return v_[grid_.index(i, j)]; }

  std::span<const double> values() const noexcept { return v_; }
  std::span<double> values() noexcept { return v_; }

  bool all_finite() const noexcept {
    return std::all_of(v_.begin(), v_.end(), [](double x) { return std::isfinite(x); });
  }

  double max_abs() const noexcept {
    double m = 0.0;
    for (double x : v_) m = std::max(m, std::abs(x));
    return m;
  }

  ScalarField& operator+=(const ScalarField& o) {
    require_same_grid(grid_, o.grid_, "scalar +=");
    for (std::size_t k = 0; k < v_.size(); ++k) v_[k] += o.v_[k];
    return *this;
  }
  ScalarField& operator-=(const ScalarField& o) {
    require_same_grid(grid_, o.grid_, "scalar -=");
    for (std::size_t k = 0; k < v_.size(); ++k) v_[k] -= o.v_[k];
    return *this;
  }
  ScalarField& operator*=(double s) noexcept {
    for (double& x : v_) x *= s;
    return *this;
  }
  /// this += s * o
  ScalarField& axpy(double s, const ScalarField& o) {
    require_same_grid(grid_, o.grid_, "scalar axpy");
    for (std::size_t k = 0; k < v_.size(); ++k) v_[k] += s * o.v_[k];
    return *this;
  }

  friend ScalarField operator+(ScalarField a, const ScalarField& b) { return a += b; }
  friend ScalarField operator-(ScalarField a, const ScalarField& b) { return a -= b; }
  friend ScalarField operator*(double s, ScalarField a) { return a *= s; }
  friend ScalarField operator-(ScalarField a) { return a *= -1.0; }

  bool operator==(const ScalarField&) const = default;

private:
  Grid grid_;
  std::vector<double> v_;
};

/// Two-component field; components stored as separate planes.
class VectorField {
public:
  explicit VectorField(const Grid& grid) : x_(grid), y_(grid) {}
  VectorField(ScalarField x, ScalarField y) : x_(std::move(x)), y_(std::move(y)) {
    require_same_grid(x_.grid(), y_.grid(), "vector field");
  }

  template <class F>
  static VectorField from_function(const Grid& grid, F&& f) {
    VectorField out(grid);
    for (int j = 0; j < grid.ny(); ++j)
      for (int i = 0; i < grid.nx(); ++i) {
        const Vec2 v = f(double(i), double(j));
        const std::size_t k = grid.index(i, j);
        out.x_[k] = v.x;
        out.y_[k] = v.y;
      }
    return out;
  }

  const Grid& grid() const noexcept { return x_.grid(); }
  std::size_t size() const noexcept { return x_.size(); }

  const ScalarField& x() const noexcept { return x_; }
  const ScalarField& y() const noexcept { return y_; }
  ScalarField& x() noexcept { return x_; }
  ScalarField& y() noexcept { return y_; }

  Vec2 operator[](std::size_t k) const noexcept { return {x_[k], y_[k]}; }
  void set(std::size_t k, Vec2 v) noexcept {
    x_[k] = v.x;
    y_[k] = v.y;
  }

  bool all_finite() const noexcept { return x_.all_finite() && y_.all_finite(); }

  /// Largest Euclidean vector length over all cells.
  double max_norm() const noexcept {
    double m = 0.0;
    for (std::size_t k = 0; k < size(); ++k) m = std::max(m, std::hypot(x_[k], y_[k]));
    return m;
  }

  VectorField& operator+=(const VectorField& o) {
    x_ += o.x_;
    y_ += o.y_;
    return *this;
  }
  VectorField& operator-=(const VectorField& o) {
    x_ -= o.x_;
    y_ -= o.y_;
    return *this;
  }
  VectorField& operator*=(double s) noexcept {
    x_ *= s;
    y_ *= s;
    return *this;
  }
  VectorField& axpy(double s, const VectorField& o) {
    x_.axpy(s, o.x_);
    y_.axpy(s, o.y_);
    return *this;
  }

  friend VectorField operator+(VectorField a, const VectorField& b) { return a += b; }
  friend VectorField operator-(VectorField a, const VectorField& b) { return a -= b; }
  friend VectorField operator*(double s, VectorField a) { return a *= s; }
  friend VectorField operator-(VectorField a) { return a *= -1.0; }

  bool operator==(const VectorField&) const = default;

private:
  ScalarField x_;
  ScalarField y_;
};

/// g(x) = x + d(x), coordinates in cells.
class Transform {
public:
  explicit Transform(const Grid& grid) : d_(grid) {}
  explicit Transform(VectorField displacement) : d_(std::move(displacement)) {}

  static Transform identity(const Grid& grid) { return Transform(grid); }
  static Transform shift(const Grid& grid, Vec2 s) {
    return Transform(VectorField::from_function(grid, [s](double, double) { return s; }));
  }

  const Grid& grid() const noexcept { return d_.grid(); }
  const VectorField& displacement() const noexcept { return d_; }
  VectorField& displacement() noexcept { return d_; }

  /// Image of node k.
  Point at_node(std::size_t k) const noexcept {
    const int nx = grid().nx();
    return {double(k % nx) + d_.x()[k], double(k / nx) + d_.y()[k]};
  }

  bool operator==(const Transform&) const = default;

private:
  VectorField d_;
};

namespace detail {

struct Stencil {
  std::size_t k00, k10, k01, k11;
  double fx, fy;
};

inline Stencil stencil(const Grid& g, Point p) noexcept {
  const double fx0 = std::floor(p.x);
  const double fy0 = std::floor(p.y);
  const auto i0 = static_cast<long long>(fx0);
  const auto j0 = static_cast<long long>(fy0);
  return {g.index(i0, j0), g.index(i0 + 1, j0), g.index(i0, j0 + 1), g.index(i0 + 1, j0 + 1),
          p.x - fx0, p.y - fy0};
}

inline void require_finite(Point p) {
  if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw DomainError("interpolate: non-finite point");
}

inline double bilinear(std::span<const double> f, const Stencil& s) noexcept {
  return (1.0 - s.fy) * ((1.0 - s.fx) * f[s.k00] + s.fx * f[s.k10]) +
         s.fy * ((1.0 - s.fx) * f[s.k01] + s.fx * f[s.k11]);
}

}  // namespace detail

/// Periodic bilinear interpolation.
inline double interpolate(const ScalarField& f, Point p) {
  detail::require_finite(p);
  return detail::bilinear(f.values(), detail::stencil(f.grid(), p));
}

inline Vec2 interpolate(const VectorField& f, Point p) {
  detail::require_finite(p);
  const auto s = detail::stencil(f.grid(), p);
  return {detail::bilinear(f.x().values(), s), detail::bilinear(f.y().values(), s)};
}

/// Derivative (per cell) of the bilinear interpolant of f at p.
///
/// The interpolant has kinks along grid lines; exactly on a line the two
/// one-sided derivatives are averaged, which turns the result into the
/// centered difference at nodes.
inline Vec2 interpolate_gradient(const ScalarField& f, Point p) {
  detail::require_finite(p);
  const double x0 = std::floor(p.x);
  const double y0 = std::floor(p.y);
  const auto i0 = static_cast<long long>(x0);
  const auto j0 = static_cast<long long>(y0);
  const double fx = p.x - x0;
  const double fy = p.y - y0;

  // d/dx along a row at fixed fractional y offset
  auto row = [&](long long i, long long j) {
    return (1.0 - fy) * f.at(i, j) + fy * f.at(i, j + 1);
  };
  auto col = [&](long long i, long long j) {
    return (1.0 - fx) * f.at(i, j) + fx * f.at(i + 1, j);
  };

  double dx = row(i0 + 1, j0) - row(i0, j0);
  if (fx == 0.0) dx = 0.5 * (row(i0 + 1, j0) - row(i0 - 1, j0));
  double dy = col(i0, j0 + 1) - col(i0, j0);
  if (fy == 0.0) dy = 0.5 * (col(i0, j0 + 1) - col(i0, j0 - 1));
  return {dx, dy};
}

/// Adjoint of interpolate(): distributes value onto the four nodes around p.
inline void splat(ScalarField& target, Point p, double value) {
  const auto s = detail::stencil(target.grid(), p);
  target[s.k00] += (1.0 - s.fx) * (1.0 - s.fy) * value;
  target[s.k10] += s.fx * (1.0 - s.fy) * value;
  target[s.k01] += (1.0 - s.fx) * s.fy * value;
  target[s.k11] += s.fx * s.fy * value;
}

/// (I o g)(x) = I(g(x)).
inline ScalarField warp(const ScalarField& image, const Transform& g) {
  require_same_grid(image.grid(), g.grid(), "warp");
  ScalarField out(image.grid());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = interpolate(image, g.at_node(k));
  return out;
}

/// (gA o gB)(x) = gA(gB(x)).
inline Transform compose(const Transform& ga, const Transform& gb) {
  require_same_grid(ga.grid(), gb.grid(), "compose");
  VectorField d(gb.grid());
  const VectorField& db = gb.displacement();
  for (std::size_t k = 0; k < d.size(); ++k) {
    const Vec2 a = interpolate(ga.displacement(), gb.at_node(k));
    d.set(k, {db.x()[k] + a.x, db.y()[k] + a.y});
  }
  return Transform(std::move(d));
}

/// Centered differences, scaled by 1/(2 * spacing).
inline VectorField gradient(const ScalarField& f) {
  const Grid& g = f.grid();
  const double s = 0.5 / g.spacing();
  VectorField out(g);
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      const std::size_t k = g.index(i, j);
      out.x()[k] = s * (f.at(i + 1, j) - f.at(i - 1, j));
      out.y()[k] = s * (f.at(i, j + 1) - f.at(i, j - 1));
    }
  return out;
}

/// Centered divergence; the negative transpose of gradient() on the periodic grid.
inline ScalarField divergence(const VectorField& v) {
  const Grid& g = v.grid();
  const double s = 0.5 / g.spacing();
  ScalarField out(g);
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      out[g.index(i, j)] = s * (v.x().at(i + 1, j) - v.x().at(i - 1, j) + v.y().at(i, j + 1) -
                                v.y().at(i, j - 1));
    }
  return out;
}

/// Sum over cells of a*b times the cell area, accumulated in index order.
inline double l2_inner(const ScalarField& a, const ScalarField& b) {
  require_same_grid(a.grid(), b.grid(), "l2_inner");
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += a[k] * b[k];
  const double h = a.grid().spacing();
  return acc * h * h;
}

inline double l2_inner(const VectorField& a, const VectorField& b) {
  require_same_grid(a.grid(), b.grid(), "l2_inner");
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += a.x()[k] * b.x()[k] + a.y()[k] * b.y()[k];
  const double h = a.grid().spacing();
  return acc * h * h;
}

inline double l2_norm(const ScalarField& a) { return std::sqrt(l2_inner(a, a)); }
inline double l2_norm(const VectorField& a) { return std::sqrt(l2_inner(a, a)); }

/// Pointwise a . b
inline ScalarField dot(const VectorField& a, const VectorField& b) {
  require_same_grid(a.grid(), b.grid(), "dot");
  ScalarField out(a.grid());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = a.x()[k] * b.x()[k] + a.y()[k] * b.y()[k];
  return out;
}

/// Pointwise s * v
inline VectorField scale(const ScalarField& s, const VectorField& v) {
  require_same_grid(s.grid(), v.grid(), "scale");
  VectorField out(v.grid());
  for (std::size_t k = 0; k < out.size(); ++k) out.set(k, {s[k] * v.x()[k], s[k] * v.y()[k]});
  return out;
}

/// Determinant of D(id + d) by centered differences of the displacement.
inline ScalarField jacobian_determinant(const Transform& g) {
  const VectorField& d = g.displacement();
  const Grid& gr = g.grid();
  ScalarField out(gr);
  for (int j = 0; j < gr.ny(); ++j)
    for (int i = 0; i < gr.nx(); ++i) {
      const double dxdx = 0.5 * (d.x().at(i + 1, j) - d.x().at(i - 1, j));
      const double dxdy = 0.5 * (d.x().at(i, j + 1) - d.x().at(i, j - 1));
      const double dydx = 0.5 * (d.y().at(i + 1, j) - d.y().at(i - 1, j));
      const double dydy = 0.5 * (d.y().at(i, j + 1) - d.y().at(i, j - 1));
      out[gr.index(i, j)] = (1.0 + dxdx) * (1.0 + dydy) - dxdy * dydx;
    }
  return out;
}

inline double min_value(const ScalarField& f) {
  return *std::min_element(f.values().begin(), f.values().end());
}

}  // namespace geoflow
