#pragma once

// Geodesic shooting written as an equilibrium-propagation energy.
//
// theta = P(0), the state s = (y_1, ..., y_T) with y_k = (I_k, P_k), and
//
//   F = <u(0), u(0)>_V + 1/2 sum_k || y_{k+1} - Phi(y_k) ||^2_{L2} + beta || I_T - I1 ||^2_{L2}
//
// where y_0 = (I0, theta) and Phi is one RK4 shooting step. At beta = 0 the
// fixed point is the shooting trajectory itself; nudging beta turns the
// defects r_k = y_{k+1} - Phi(y_k) into the backward adjoint sweep.

#include <cmath>
#include <vector>

#include "ep.hpp"
#include "shooting.hpp"

namespace geoflow {

class ShootingEnergyModel : public EnergyModel {
public:
  ShootingEnergyModel(ScalarField I0, ScalarField I1, KernelSpec k, int T)
      : I0_(std::move(I0)), I1_(std::move(I1)), kernel_(std::move(k)), T_(T) {
    require_same_grid(I0_.grid(), I1_.grid(), "shooting energy");
    require_same_grid(I0_.grid(), kernel_.grid, "shooting energy");
    if (T_ < 2) throw DomainError("shooting energy: need at least two time steps");
  }

  int dim_theta() const override { return int(n()); }
  int dim_state() const override { return int(2 * n() * std::size_t(T_)); }

  const Grid& grid() const noexcept { return I0_.grid(); }
  int steps() const noexcept { return T_; }

  ScalarField field(const Vec& v, std::size_t offset = 0) const {
    return ScalarField(grid(), std::vector<double>(v.data() + offset, v.data() + offset + n()));
  }
  Vec pack(const ScalarField& f) const { return Eigen::Map<const Vec>(f.values().data(), Eigen::Index(n())); }

  /// y_1..y_T from a flat state; y_0 = (I0, theta) is prepended.
  std::vector<ImageMomentum> unpack(const Vec& theta, const Vec& s) const {
    std::vector<ImageMomentum> y;
    y.reserve(std::size_t(T_) + 1);
    y.push_back({I0_, field(theta)});
    for (int k = 0; k < T_; ++k) {
      const std::size_t off = 2 * n() * std::size_t(k);
      y.push_back({field(s, off), field(s, off + n())});
    }
    return y;
  }

  Vec pack_states(const std::vector<ImageMomentum>& y) const {
    Vec s(dim_state());
    for (int k = 0; k < T_; ++k) {
      const std::size_t off = 2 * n() * std::size_t(k);
      const auto& st = y[std::size_t(k) + 1];
      std::copy(st.I.values().begin(), st.I.values().end(), s.data() + off);
      std::copy(st.P.values().begin(), st.P.values().end(), s.data() + off + n());
    }
    return s;
  }

  /// The exact shooting trajectory (the fixed point at beta = 0).
  Vec initial_state(const Vec& theta) const override {
    std::vector<ImageMomentum> y{{I0_, field(theta)}};
    for (int k = 0; k < T_; ++k) y.push_back(rk4_step(y.back(), dt(), kernel_));
    return pack_states(y);
  }

  double energy(const Vec& theta, const Vec& beta, const Vec& s) const override {
    const auto y = unpack(theta, s);
    double defect = 0.0;
    for (const auto& r : defects(y)) defect += l2_inner(r.I, r.I) + l2_inner(r.P, r.P);
    const ScalarField m = y.back().I - I1_;
    return kinetic(y.front()) + 0.5 * defect + beta[0] * l2_inner(m, m);
  }

  Vec dF_ds(const Vec& theta, const Vec& beta, const Vec& s) const override {
    const auto y = unpack(theta, s);
    const auto r = defects(y);
    std::vector<ImageMomentum> g(std::size_t(T_) + 1, {ScalarField(grid()), ScalarField(grid())});
    for (int k = 1; k <= T_; ++k) {
      ImageMomentum gk = r[std::size_t(k) - 1];
      if (k < T_) gk.axpy(-1.0, rk4_step_vjp(y[std::size_t(k)], r[std::size_t(k)], dt(), kernel_));
      g[std::size_t(k)] = std::move(gk);
    }
    g.back().I.axpy(2.0 * beta[0], y.back().I - I1_);
    Vec out = pack_states(g);
    out *= h2();
    return out;
  }

  Vec dF_dtheta(const Vec& theta, const Vec&, const Vec& s) const override {
    const auto y = unpack(theta, s);
    ImageMomentum r0 = y[1];
    r0.axpy(-1.0, rk4_step(y[0], dt(), kernel_));
    ScalarField g = kinetic_gradient(y.front());
    g -= rk4_step_vjp(y[0], r0, dt(), kernel_).P;
    Vec out = pack(g);
    out *= h2();
    return out;
  }

  Vec dF_dbeta(const Vec& theta, const Vec&, const Vec& s) const override {
    const auto y = unpack(theta, s);
    const ScalarField m = y.back().I - I1_;
    return Vec::Constant(1, l2_inner(m, m));
  }

  /// Fixed-point iteration: the defects are rebuilt backward from the nudge
  /// (r_{T-1} = -2 beta (I_T - I1, 0), r_{k-1} = J_k^T r_k), then the states
  /// forward as y_{k+1} = Phi(y_k) + r_k.
  RelaxResult settle(const Vec& theta, const Vec& beta, const Vec& s_init, const EpConfig& cfg) const override {
    RelaxResult res{s_init, 0.0, 0};
    res.residual = dF_ds(theta, beta, res.s).lpNorm<Eigen::Infinity>();
    double best = res.residual;
    while (!(res.residual < cfg.relax_tol)) {
      if (res.iterations >= cfg.relax_max_iters || !std::isfinite(res.residual))
        throw ConvergenceError("shooting relax: no fixed point within the iteration budget", best);
      auto y = unpack(theta, res.s);
      std::vector<ImageMomentum> r(std::size_t(T_), {ScalarField(grid()), ScalarField(grid())});
      r.back().I = y.back().I - I1_;
      r.back().I *= -2.0 * beta[0];
      for (int k = T_ - 1; k >= 1; --k)
        r[std::size_t(k) - 1] = rk4_step_vjp(y[std::size_t(k)], r[std::size_t(k)], dt(), kernel_);
      for (int k = 0; k < T_; ++k) {
        ImageMomentum next = rk4_step(y[std::size_t(k)], dt(), kernel_);
        next.axpy(1.0, r[std::size_t(k)]);
        y[std::size_t(k) + 1] = std::move(next);
      }
      res.s = pack_states(y);
      res.residual = dF_ds(theta, beta, res.s).lpNorm<Eigen::Infinity>();
      best = std::min(best, res.residual);
      ++res.iterations;
    }
    return res;
  }

private:
  std::size_t n() const noexcept { return grid().size(); }
  double dt() const noexcept { return 1.0 / T_; }
  double h2() const noexcept { return grid().spacing() * grid().spacing(); }

  std::vector<ImageMomentum> defects(const std::vector<ImageMomentum>& y) const {
    std::vector<ImageMomentum> r;
    r.reserve(std::size_t(T_));
    for (int k = 0; k < T_; ++k) {
      ImageMomentum d = y[std::size_t(k) + 1];
      d.axpy(-1.0, rk4_step(y[std::size_t(k)], dt(), kernel_));
      r.push_back(std::move(d));
    }
    return r;
  }

  double kinetic(const ImageMomentum& y0) const {
    const VectorField m = scale(y0.P, gradient(y0.I));
    return l2_inner(m, apply_K(MomentumField(m), kernel_));
  }

  /// L2 gradient of the kinetic term with respect to P(0).
  ScalarField kinetic_gradient(const ImageMomentum& y0) const {
    const VectorField g = gradient(y0.I);
    return 2.0 * dot(g, apply_K(MomentumField(scale(y0.P, g)), kernel_));
  }

  ScalarField I0_, I1_;
  KernelSpec kernel_;
  int T_;
};

struct ShootingEpReport {
  double xi;
  ScalarField ep_gradient;       ///< EP estimate of the L2 gradient of ||I(1) - I1||^2 in P(0)
  ScalarField adjoint_gradient;  ///< 2 * shooting_gradient
  double cosine;
  double relative_error;  ///< ||ep - adjoint|| / ||adjoint||
  int nudged_iterations;
};

/// EP two-phase estimate of the data-term gradient against the adjoint one.
inline ShootingEpReport shooting_as_ep(const ScalarField& I0, const ScalarField& I1, const ScalarField& P0,
                                       const KernelSpec& k, int T, double xi, const EpConfig& base = {}) {
  ShootingEnergyModel model(I0, I1, k, T);
  EpConfig cfg = base;
  cfg.xi = xi;
  cfg.delta = Vec::Ones(1);
  const Vec theta = model.pack(P0);
  const EpEstimate e = ep_update(model, theta, Vec::Zero(1), cfg);
  const double h2 = k.grid.spacing() * k.grid.spacing();

  ShootingEpReport rep{xi, model.field(Vec(-e.dtheta / h2)), 2.0 * shooting_gradient(I0, P0, I1, k, T), 0.0,
                       0.0, e.nudged_iterations};
  const double na = l2_norm(rep.adjoint_gradient), ne = l2_norm(rep.ep_gradient);
  if (na > 0.0 && ne > 0.0) rep.cosine = l2_inner(rep.ep_gradient, rep.adjoint_gradient) / (na * ne);
  else rep.cosine = (na == 0.0 && ne == 0.0) ? 1.0 : 0.0;
  rep.relative_error = na > 0.0 ? l2_norm(rep.ep_gradient - rep.adjoint_gradient) / na : ne;
  return rep;
}

}  // namespace geoflow
