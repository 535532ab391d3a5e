#pragma once

// Large-deformation matching over a time-varying velocity u(t):
//
//   E(u) = sum_j dt <u_j, u_j>_V + (1/sigma^2) || I1 - I0 o g_{1,0} ||^2_{L2}
//
// The gradient is returned in the V metric, per time step.

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "flow.hpp"
#include "kernel.hpp"
#include "optimize.hpp"

namespace geoflow {

struct LddmmProblem {
  LddmmProblem(ScalarField i0, ScalarField i1, KernelSpec k, double sigma_data, int T)
      : I0(std::move(i0)), I1(std::move(i1)), kernel(std::move(k)), sigma(sigma_data), steps(T) {
    require_same_grid(I0.grid(), I1.grid(), "lddmm problem");
    require_same_grid(I0.grid(), kernel.grid, "lddmm problem");
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw DomainError("lddmm: sigma must be positive");
    if (steps < 1) throw DomainError("lddmm: need at least one time step");
    if (!I0.all_finite() || !I1.all_finite()) throw DomainError("lddmm: non-finite image");
  }

  ScalarField I0;
  ScalarField I1;
  KernelSpec kernel;
  double sigma;
  int steps;

  const Grid& grid() const noexcept { return I0.grid(); }
  double data_weight() const noexcept { return 1.0 / (sigma * sigma); }
  TimeVaryingVelocity zero_velocity() const { return TimeVaryingVelocity(grid(), steps); }
};

struct FlowDiagnostics {
  bool diffeomorphic = true;
  double min_jacdet = std::numeric_limits<double>::infinity();
  std::string message;

  void observe(const ScalarField& jacdet, const char* what) {
    const double m = min_value(jacdet);
    min_jacdet = std::min(min_jacdet, m);
    if (m <= 0.0 && diffeomorphic) {
      diffeomorphic = false;
      message = std::string("non-positive Jacobian determinant in ") + what;
    }
  }
};

/// J_t^0, J_t^1 and |D g_{t,1}| at every step boundary t_j = j dt, j = 0..T.
struct LddmmTrajectory {
  TimeVaryingVelocity u;
  std::vector<ScalarField> J0;
  std::vector<ScalarField> J1;
  std::vector<ScalarField> jacdet;
  FlowDiagnostics diagnostics;
};

inline LddmmTrajectory lddmm_trajectory(const LddmmProblem& p, const TimeVaryingVelocity& u) {
  require_same_grid(u.grid(), p.grid(), "lddmm trajectory");
  const auto to_start = flows_to_start(u);
  const auto to_end = flows_to_end(u);
  LddmmTrajectory tr{u, {}, {}, {}, {}};
  for (std::size_t j = 0; j < to_start.size(); ++j) {
    tr.J0.push_back(warp(p.I0, to_start[j]));
    tr.J1.push_back(warp(p.I1, to_end[j]));
    tr.jacdet.push_back(jacobian_determinant(to_end[j]));
    tr.diagnostics.observe(tr.jacdet.back(), "g_{t,1}");
  }
  tr.diagnostics.observe(jacobian_determinant(to_start.back()), "g_{1,0}");
  return tr;
}

struct LddmmEnergy {
  double total = 0.0;
  double kinetic = 0.0;
  double data = 0.0;
  bool admissible = true;
  FlowDiagnostics diagnostics;
};

inline double kinetic_energy(const TimeVaryingVelocity& u, const KernelSpec& k) {
  double acc = 0.0;
  for (const auto& f : u) acc += v_inner(f, f, k);
  return acc * u.dt();
}

inline LddmmEnergy lddmm_energy(const LddmmProblem& p, const TimeVaryingVelocity& u) {
  if (u.steps() != p.steps) throw GridMismatch("lddmm energy: step count differs from problem");
  require_same_grid(u.grid(), p.grid(), "lddmm energy");
  LddmmEnergy e;
  e.kinetic = kinetic_energy(u, p.kernel);
  const Transform g10 = integrate_flow_steps(u, u.steps(), 0);
  const ScalarField r = p.I1 - warp(p.I0, g10);
  e.data = p.data_weight() * l2_inner(r, r);
  e.total = e.kinetic + e.data;
  e.diagnostics.observe(jacobian_determinant(g10), "g_{1,0}");
  e.admissible = e.diagnostics.diffeomorphic;
  return e;
}

struct LddmmGradient {
  std::vector<VectorField> per_step;
  FlowDiagnostics diagnostics;
};

/// Exact V-gradient of the discrete energy.
///
/// Per step it has the form 2 u_j - K(m_j): m_j is the data-term momentum
/// (2/sigma^2) |Dg| grad(J^0) (J^0 - J^1) assembled by transporting the
/// end-point residual back through the composed flow (splatting plays the
/// part of the Jacobian factor). With u = 0 it reduces exactly to
/// -K((2/sigma^2) grad(I0) (I0 - I1)) at every step.
inline LddmmGradient lddmm_gradient(const LddmmProblem& p, const TimeVaryingVelocity& u) {
  if (u.steps() != p.steps) throw GridMismatch("lddmm gradient: step count differs from problem");
  require_same_grid(u.grid(), p.grid(), "lddmm gradient");
  const Grid& grid = p.grid();
  const int T = u.steps();
  const double dt = u.dt();
  const double h2 = grid.spacing() * grid.spacing();
  const std::size_t N = grid.size();

  std::vector<Transform> steps;
  steps.reserve(std::size_t(T));
  for (int j = 0; j < T; ++j) steps.push_back(detail::small_step(u[j], -dt));
  std::vector<Transform> G{Transform::identity(grid)};
  for (int j = 0; j < T; ++j) G.push_back(compose(G.back(), steps[std::size_t(j)]));

  LddmmGradient out;
  out.diagnostics.observe(jacobian_determinant(G.back()), "g_{1,0}");
  for (const auto& g : flows_to_end(u)) out.diagnostics.observe(jacobian_determinant(g), "g_{t,1}");

  // cotangent of the displacement of G_T
  VectorField lambda(grid);
  const double w = 2.0 * p.data_weight() * h2;
  for (std::size_t k = 0; k < N; ++k) {
    const Point q = G.back().at_node(k);
    const double r = p.I1[k] - interpolate(p.I0, q);
    const Vec2 dI = interpolate_gradient(p.I0, q);
    lambda.set(k, {-w * r * dI.x, -w * r * dI.y});
  }

  out.per_step.assign(std::size_t(T), VectorField(grid));
  for (int j = T - 1; j >= 0; --j) {
    const Transform& step = steps[std::size_t(j)];
    const VectorField& D = G[std::size_t(j)].displacement();
    VectorField cot(grid);
    VectorField next(grid);
    for (std::size_t k = 0; k < N; ++k) {
      const Point q = step.at_node(k);
      const Vec2 a = lambda[k];
      const Vec2 dDx = interpolate_gradient(D.x(), q);
      const Vec2 dDy = interpolate_gradient(D.y(), q);
      // -dt (I + DD)^T a
      cot.set(k, {-dt * (a.x * (1.0 + dDx.x) + a.y * dDy.x),
                  -dt * (a.x * dDx.y + a.y * (1.0 + dDy.y))});
      if (j > 0) {
        splat(next.x(), q, a.x);
        splat(next.y(), q, a.y);
      }
    }
    cot *= 1.0 / (dt * h2);
    VectorField g = apply_K(MomentumField(std::move(cot)), p.kernel);
    g.axpy(2.0, u[j]);
    out.per_step[std::size_t(j)] = std::move(g);
    lambda = std::move(next);
  }
  return out;
}

/// The Euler-Lagrange gradient written directly in terms of the trajectory:
///   2 u_t - K((2/sigma^2) |Dg_{t,1}| grad(J_t^0) (J_t^0 - J_t^1)),
/// with step j evaluated at the boundary t_{j+1}. It approximates
/// lddmm_gradient() up to discretization error.
inline LddmmGradient lddmm_gradient_continuous(const LddmmProblem& p, const TimeVaryingVelocity& u) {
  const auto tr = lddmm_trajectory(p, u);
  LddmmGradient out;
  out.diagnostics = tr.diagnostics;
  const double c = 2.0 * p.data_weight();
  for (int j = 0; j < u.steps(); ++j) {
    const std::size_t t = std::size_t(j) + 1;
    ScalarField s = tr.J0[t] - tr.J1[t];
    for (std::size_t k = 0; k < s.size(); ++k) s[k] *= c * tr.jacdet[t][k];
    VectorField g = -apply_K(MomentumField(scale(s, gradient(tr.J0[t]))), p.kernel);
    g.axpy(2.0, u[j]);
    out.per_step.push_back(std::move(g));
  }
  return out;
}

/// sum_j dt <a_j, b_j>_V
inline double time_v_inner(const std::vector<VectorField>& a, const TimeVaryingVelocity& b,
                           const KernelSpec& k) {
  double acc = 0.0;
  for (int j = 0; j < b.steps(); ++j) acc += v_inner(a[std::size_t(j)], b[j], k);
  return acc * b.dt();
}

struct LddmmResult {
  TimeVaryingVelocity u;
  Transform g;  ///< g_{1,0}: warp(I0, g) is the deformed template
  std::vector<DescentStep> trace;
  FlowDiagnostics diagnostics;
  int iterations = 0;
  bool converged = false;
  bool stalled = false;
};

inline LddmmResult register_lddmm(const LddmmProblem& p, const DescentOptions& opt = {}) {
  auto evaluate = [&](const TimeVaryingVelocity& u) {
    LddmmEnergy e = lddmm_energy(p, u);
    if (e.admissible) {
      for (const auto& g : flows_to_end(u)) e.diagnostics.observe(jacobian_determinant(g), "g_{t,1}");
      e.admissible = e.diagnostics.diffeomorphic;
    }
    return e;
  };
  auto grad = [&](const TimeVaryingVelocity& u) {
    return TimeVaryingVelocity(lddmm_gradient(p, u).per_step);
  };
  auto update = [](const TimeVaryingVelocity& u, const TimeVaryingVelocity& g, double a) {
    TimeVaryingVelocity out = u;
    return out.axpy(-a, g);
  };
  auto sqnorm = [&](const TimeVaryingVelocity& g) { return kinetic_energy(g, p.kernel); };

  auto res = armijo_descent(p.zero_velocity(), evaluate, grad, update, sqnorm, opt);
  LddmmResult out{res.x,  integrate_flow_steps(res.x, res.x.steps(), 0), std::move(res.trace), {},
                  res.iterations, res.converged, res.stalled};
  out.diagnostics = lddmm_trajectory(p, out.u).diagnostics;
  return out;
}

}  // namespace geoflow

namespace geoflow {

/// Matching restricted to a stationary velocity v (u_j = v for every step).
/// The energy is the LDDMM energy of that path, so its V gradient is the
/// time average of the per-step LDDMM gradients.
struct SvfResult {
  VectorField v;
  Transform g;      ///< g_{1,0} of the stepped flow used by the energy
  Transform g_exp;  ///< exp(-v) by scaling and squaring
  double exp_gap = 0.0;  ///< max displacement difference between g and g_exp
  std::vector<DescentStep> trace;
  FlowDiagnostics diagnostics;
  int iterations = 0;
  bool converged = false;
  bool stalled = false;
};

inline SvfResult register_svf(const LddmmProblem& p, const DescentOptions& opt = {},
                              std::optional<int> squarings = std::nullopt) {
  const int T = p.steps;
  auto path = [T](const VectorField& v) { return TimeVaryingVelocity::stationary(v, T); };
  auto evaluate = [&](const VectorField& v) {
    const auto u = path(v);
    LddmmEnergy e = lddmm_energy(p, u);
    if (e.admissible) {
      for (const auto& g : flows_to_end(u)) e.diagnostics.observe(jacobian_determinant(g), "g_{t,1}");
      e.admissible = e.diagnostics.diffeomorphic;
    }
    return e;
  };
  auto grad = [&](const VectorField& v) {
    const auto per_step = lddmm_gradient(p, path(v)).per_step;
    VectorField mean(p.I0.grid());
    for (const auto& g : per_step) mean.axpy(1.0 / T, g);
    return mean;
  };
  auto update = [](const VectorField& v, const VectorField& g, double a) {
    VectorField out = v;
    out.axpy(-a, g);
    return out;
  };
  auto sqnorm = [&](const VectorField& g) { return v_inner(g, g, p.kernel); };

  auto res = armijo_descent(VectorField(p.I0.grid()), evaluate, grad, update, sqnorm, opt);
  const auto u = path(res.x);
  SvfResult out{res.x, integrate_flow_steps(u, T, 0), svf_exp(-1.0 * res.x, squarings), 0.0, std::move(res.trace), {},
                res.iterations, res.converged, res.stalled};
  out.exp_gap = max_displacement_gap(out.g, out.g_exp);
  out.diagnostics = lddmm_trajectory(p, u).diagnostics;
  return out;
}

}  // namespace geoflow
