#pragma once

// Geodesic shooting for image matching. The state y = (I, P) pairs the
// deformed image with a scalar momentum density and evolves by
//
//   dI/dt = -grad(I) . u,   dP/dt = -div(P u),   u = -K(P grad(I)),
//
// integrated with classical RK4. The adjoint pass is the exact transpose of
// the discrete forward map, so the gradient on P(0) is exact for the
// discrete cost C = 1/2 || I(1) - I1 ||^2_{L2}.

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "kernel.hpp"
#include "lddmm.hpp"
#include "optimize.hpp"

namespace geoflow {

/// The pair (I, P).
struct ImageMomentum {
  ScalarField I;
  ScalarField P;

  ImageMomentum& axpy(double s, const ImageMomentum& o) {
    I.axpy(s, o.I);
    P.axpy(s, o.P);
    return *this;
  }
  bool all_finite() const noexcept { return I.all_finite() && P.all_finite(); }
};

/// u = -K(P grad(I))
inline VectorField shooting_velocity(const ScalarField& I, const ScalarField& P, const KernelSpec& k) {
  return -apply_K(MomentumField(scale(P, gradient(I))), k);
}

/// Right-hand side of the shooting system.
inline ImageMomentum shooting_rhs(const ImageMomentum& y, const KernelSpec& k) {
  const VectorField g = gradient(y.I);
  const VectorField u = -apply_K(MomentumField(scale(y.P, g)), k);
  return {-dot(g, u), -divergence(scale(y.P, u))};
}

/// Transpose of the Jacobian of shooting_rhs at y applied to the cotangent c.
inline ImageMomentum shooting_rhs_vjp(const ImageMomentum& y, const ImageMomentum& c, const KernelSpec& k) {
  const VectorField g = gradient(y.I);
  const VectorField u = -apply_K(MomentumField(scale(y.P, g)), k);
  VectorField ubar = scale(y.P, gradient(c.P));
  ubar -= scale(c.I, g);
  const VectorField w = apply_K(MomentumField(std::move(ubar)), k);
  ScalarField Ibar = divergence(scale(c.I, u));
  Ibar += divergence(scale(y.P, w));
  ScalarField Pbar = dot(gradient(c.P), u);
  Pbar -= dot(w, g);
  return {std::move(Ibar), std::move(Pbar)};
}

/// One classical RK4 step of length dt.
inline ImageMomentum rk4_step(const ImageMomentum& y, double dt, const KernelSpec& k) {
  const ImageMomentum k1 = shooting_rhs(y, k);
  ImageMomentum a = y;
  const ImageMomentum k2 = shooting_rhs(a.axpy(0.5 * dt, k1), k);
  a = y;
  const ImageMomentum k3 = shooting_rhs(a.axpy(0.5 * dt, k2), k);
  a = y;
  const ImageMomentum k4 = shooting_rhs(a.axpy(dt, k3), k);
  ImageMomentum out = y;
  out.axpy(dt / 6.0, k1).axpy(dt / 3.0, k2).axpy(dt / 3.0, k3).axpy(dt / 6.0, k4);
  return out;
}

/// Transpose of the Jacobian of rk4_step at y applied to lambda.
inline ImageMomentum rk4_step_vjp(const ImageMomentum& y, const ImageMomentum& lambda, double dt,
                                  const KernelSpec& k) {
  // stage inputs, recomputed
  const ImageMomentum k1 = shooting_rhs(y, k);
  ImageMomentum a2 = y;
  a2.axpy(0.5 * dt, k1);
  const ImageMomentum k2 = shooting_rhs(a2, k);
  ImageMomentum a3 = y;
  a3.axpy(0.5 * dt, k2);
  const ImageMomentum k3 = shooting_rhs(a3, k);
  ImageMomentum a4 = y;
  a4.axpy(dt, k3);

  ImageMomentum ybar = lambda;
  auto scaled = [&](double s) {
    ImageMomentum c = lambda;
    c.I *= s;
    c.P *= s;
    return c;
  };
  ImageMomentum k3bar = scaled(dt / 3.0);
  ImageMomentum k2bar = scaled(dt / 3.0);
  ImageMomentum k1bar = scaled(dt / 6.0);

  const ImageMomentum a4bar = shooting_rhs_vjp(a4, scaled(dt / 6.0), k);
  ybar.axpy(1.0, a4bar);
  k3bar.axpy(dt, a4bar);
  const ImageMomentum a3bar = shooting_rhs_vjp(a3, k3bar, k);
  ybar.axpy(1.0, a3bar);
  k2bar.axpy(0.5 * dt, a3bar);
  const ImageMomentum a2bar = shooting_rhs_vjp(a2, k2bar, k);
  ybar.axpy(1.0, a2bar);
  k1bar.axpy(0.5 * dt, a2bar);
  ybar.axpy(1.0, shooting_rhs_vjp(y, k1bar, k));
  return ybar;
}

/// Forward trajectory at t_j = j / T, j = 0..T, plus the adjoint fields once
/// adjoint_advect() has run.
struct ShootingState {
  KernelSpec kernel;
  int steps = 0;
  std::vector<ScalarField> I;
  std::vector<ScalarField> P;
  std::vector<VectorField> u;
  std::vector<ScalarField> I_hat;
  std::vector<ScalarField> P_hat;

  double dt() const noexcept { return 1.0 / steps; }
  const Grid& grid() const noexcept { return kernel.grid; }
  bool has_adjoint() const noexcept { return !I_hat.empty(); }
};

inline ShootingState shoot(const ScalarField& I0, const ScalarField& P0, const KernelSpec& k, int T) {
  require_same_grid(I0.grid(), P0.grid(), "shoot");
  require_same_grid(I0.grid(), k.grid, "shoot");
  if (T < 2) throw DomainError("shoot: need at least two time steps");
  if (!I0.all_finite() || !P0.all_finite()) throw DomainError("shoot: non-finite initial state");
  ShootingState s{k, T, {I0}, {P0}, {}, {}, {}};
  s.I.reserve(std::size_t(T) + 1);
  s.P.reserve(std::size_t(T) + 1);
  ImageMomentum y{I0, P0};
  const double dt = 1.0 / T;
  for (int j = 0; j < T; ++j) {
    y = rk4_step(y, dt, k);
    if (!y.all_finite()) throw BlowUpError("shoot: non-finite state", std::size_t(j) + 1);
    s.I.push_back(y.I);
    s.P.push_back(y.P);
  }
  for (int j = 0; j <= T; ++j) s.u.push_back(shooting_velocity(s.I[std::size_t(j)], s.P[std::size_t(j)], k));
  return s;
}

/// Backward pass from I_hat(1) = -(I(1) - I1), P_hat(1) = 0. Returns a copy
/// of s with I_hat and P_hat filled at every t_j.
inline ShootingState adjoint_advect(ShootingState s, const ScalarField& I1) {
  if (s.I.empty()) throw DomainError("adjoint_advect: no forward trajectory");
  require_same_grid(s.grid(), I1.grid(), "adjoint_advect");
  const std::size_t T = std::size_t(s.steps);
  // lambda = -(I_hat, P_hat) is the cotangent of C with respect to y_j
  ImageMomentum lambda{s.I[T] - I1, ScalarField(s.grid())};
  s.I_hat.assign(T + 1, ScalarField(s.grid()));
  s.P_hat.assign(T + 1, ScalarField(s.grid()));
  s.I_hat[T] = -lambda.I;
  s.P_hat[T] = -lambda.P;
  for (std::size_t j = T; j-- > 0;) {
    lambda = rk4_step_vjp({s.I[j], s.P[j]}, lambda, s.dt(), s.kernel);
    if (!lambda.all_finite()) throw BlowUpError("adjoint_advect: non-finite adjoint", j);
    s.I_hat[j] = -lambda.I;
    s.P_hat[j] = -lambda.P;
  }
  return s;
}

/// 1/2 || I(1) - I1 ||^2_{L2}
inline double shooting_data_cost(const ShootingState& s, const ScalarField& I1) {
  const ScalarField r = s.I.back() - I1;
  return 0.5 * l2_inner(r, r);
}

/// L2 gradient of 1/2 || I(1) - I1 ||^2 with respect to P(0), i.e. -P_hat(0).
inline ScalarField shooting_gradient(const ScalarField& I0, const ScalarField& P0, const ScalarField& I1,
                                     const KernelSpec& k, int T) {
  return -adjoint_advect(shoot(I0, P0, k, T), I1).P_hat.front();
}

/// <u(t_j), u(t_j)>_V along the trajectory, evaluated as <m, K m>_{L2}.
inline std::vector<double> kinetic_series(const ShootingState& s) {
  std::vector<double> out;
  for (std::size_t j = 0; j < s.I.size(); ++j)
    out.push_back(0.0 - l2_inner(scale(s.P[j], gradient(s.I[j])), s.u[j]));
  return out;
}

/// Largest |E(t) - E(0)| / E(0) over the trajectory; zero for a resting state.
inline double kinetic_drift(const ShootingState& s) {
  const auto e = kinetic_series(s);
  if (!(e.front() > 0.0)) return 0.0;
  double worst = 0.0;
  for (double v : e) worst = std::max(worst, std::abs(v - e.front()) / e.front());
  return worst;
}

/// Per-step velocities (interval averages) for transporting I0 by a flow.
inline TimeVaryingVelocity shooting_flow(const ShootingState& s) {
  std::vector<VectorField> f;
  for (std::size_t j = 0; j + 1 < s.u.size(); ++j) {
    VectorField v = s.u[j];
    v += s.u[j + 1];
    v *= 0.5;
    f.push_back(std::move(v));
  }
  return TimeVaryingVelocity(std::move(f));
}

/// I0 carried along the shooting velocity by semi-Lagrangian composition.
inline ScalarField transported_endpoint(const ShootingState& s) {
  const auto u = shooting_flow(s);
  return warp(s.I.front(), integrate_flow_steps(u, u.steps(), 0));
}

/// Momentum whose shooting velocity at t = 0 matches the LDDMM velocity u(0)
/// at a stationary point: P0 = (1/sigma^2) |Dg_{0,1}| (J_0^1 - I0).
inline ScalarField momentum_from_lddmm(const LddmmProblem& p, const TimeVaryingVelocity& u) {
  const auto tr = lddmm_trajectory(p, u);
  ScalarField P0 = tr.J1.front() - p.I0;
  for (std::size_t k = 0; k < P0.size(); ++k) P0[k] *= p.data_weight() * tr.jacdet.front()[k];
  return P0;
}

struct ShootingEnergy {
  double total = 0.0;
  double kinetic = 0.0;
  double data = 0.0;
  bool admissible = true;
};

struct ShootingMatch {
  ScalarField P0;
  ShootingState state;
  std::vector<DescentStep> trace;
  int iterations = 0;
  bool converged = false;
  bool stalled = false;
};

/// Minimizes <u(0), u(0)>_V + weight || I(1) - I1 ||^2_{L2} over P(0).
inline ShootingMatch match_by_shooting(const ScalarField& I0, const ScalarField& I1, const KernelSpec& k,
                                       double weight, int T, const DescentOptions& opt = {}) {
  require_same_grid(I0.grid(), I1.grid(), "match_by_shooting");
  if (!(weight > 0.0) || !std::isfinite(weight)) throw DomainError("match_by_shooting: weight must be positive");
  const VectorField g0 = gradient(I0);

  auto evaluate = [&](const ScalarField& P0) {
    ShootingEnergy e;
    try {
      const ShootingState s = shoot(I0, P0, k, T);
      e.kinetic = kinetic_series(s).front();
      e.data = weight * 2.0 * shooting_data_cost(s, I1);
      e.total = e.kinetic + e.data;
    } catch (const BlowUpError&) {
      e.admissible = false;
      e.total = std::numeric_limits<double>::infinity();
    }
    return e;
  };
  auto grad = [&](const ScalarField& P0) {
    ScalarField out = shooting_gradient(I0, P0, I1, k, T);
    out *= 2.0 * weight;
    out += 2.0 * dot(g0, apply_K(MomentumField(scale(P0, g0)), k));
    return out;
  };
  auto update = [](const ScalarField& x, const ScalarField& g, double a) {
    ScalarField out = x;
    return out.axpy(-a, g);
  };
  auto sqnorm = [](const ScalarField& g) { return l2_inner(g, g); };

  auto res = armijo_descent(ScalarField(I0.grid()), evaluate, grad, update, sqnorm, opt);
  ShootingState s = adjoint_advect(shoot(I0, res.x, k, T), I1);
  return {std::move(res.x), std::move(s), std::move(res.trace), res.iterations, res.converged, res.stalled};
}

}  // namespace geoflow
