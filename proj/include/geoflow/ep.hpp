#pragma once

// Equilibrium propagation on a generic energy F(theta, beta, s) (the data v
// lives inside the model). The prediction is a fixed point dF/ds = 0, the
// cost is C = delta . dF/dbeta at that fixed point, and the two-phase
// estimate
//
//   dtheta = -(1/xi) (dF/dtheta|_{beta + xi delta} - dF/dtheta|_{beta})
//
// converges to -dC/dtheta as xi -> 0. exact_gradient() computes dC/dtheta
// through the Lagrange multiplier of the fixed-point constraint.

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <string>

#include "errors.hpp"

namespace geoflow {

using Vec = Eigen::VectorXd;

struct EpConfig {
  Vec delta = Vec::Ones(1);
  double xi = 1e-3;
  double relax_tol = 1e-8;
  int relax_max_iters = 200000;
  double relax_step = 0.1;

  void validate() const {
    if (!(xi != 0.0) || !std::isfinite(xi)) throw DomainError("ep: xi must be finite and nonzero");
    if (delta.size() == 0 || !(std::abs(delta.norm() - 1.0) < 1e-12))
      throw DomainError("ep: delta must be a unit vector");
    if (!(relax_tol > 0.0) || !(relax_step > 0.0) || relax_max_iters < 1)
      throw DomainError("ep: invalid relaxation settings");
  }
};

struct RelaxResult {
  Vec s;
  double residual = 0.0;  ///< max |dF/ds| at s
  int iterations = 0;
};

class EnergyModel {
public:
  virtual ~EnergyModel() = default;

  virtual int dim_theta() const = 0;
  virtual int dim_state() const = 0;
  virtual int dim_beta() const { return 1; }

  virtual double energy(const Vec& theta, const Vec& beta, const Vec& s) const = 0;
  virtual Vec dF_ds(const Vec& theta, const Vec& beta, const Vec& s) const = 0;
  virtual Vec dF_dtheta(const Vec& theta, const Vec& beta, const Vec& s) const = 0;
  virtual Vec dF_dbeta(const Vec& theta, const Vec& beta, const Vec& s) const = 0;

  /// Starting point of the free phase.
  virtual Vec initial_state(const Vec& /*theta*/) const { return Vec::Zero(dim_state()); }

  /// Drives dF/ds to zero from s_init. The default is damped gradient flow
  /// s <- s - relax_step * dF/ds.
  virtual RelaxResult settle(const Vec& theta, const Vec& beta, const Vec& s_init, const EpConfig& cfg) const {
    RelaxResult r{s_init, 0.0, 0};
    Vec g = dF_ds(theta, beta, r.s);
    r.residual = g.lpNorm<Eigen::Infinity>();
    double best = r.residual;
    while (!(r.residual < cfg.relax_tol)) {
      if (r.iterations >= cfg.relax_max_iters || !std::isfinite(r.residual))
        throw ConvergenceError("relax: no fixed point within the iteration budget", best);
      r.s -= cfg.relax_step * g;
      g = dF_ds(theta, beta, r.s);
      r.residual = g.lpNorm<Eigen::Infinity>();
      best = std::min(best, r.residual);
      ++r.iterations;
    }
    return r;
  }
};

inline RelaxResult relax(const EnergyModel& m, const Vec& theta, const Vec& beta, const Vec& s_init,
                         const EpConfig& cfg) {
  return m.settle(theta, beta, s_init, cfg);
}

/// delta . dF/dbeta at the given state.
inline double ep_cost(const EnergyModel& m, const Vec& theta, const Vec& beta, const Vec& delta, const Vec& s) {
  return delta.dot(m.dF_dbeta(theta, beta, s));
}

struct EpEstimate {
  Vec dtheta;        ///< -(1/xi)(dF/dtheta at the nudged point - at the free point)
  Vec s_free;        ///< fixed point at beta
  Vec s_nudged;      ///< fixed point at beta + xi delta
  Vec stat_free;     ///< dF/dtheta at s_free
  Vec stat_nudged;   ///< dF/dtheta at s_nudged
  int free_iterations = 0;
  int nudged_iterations = 0;
};

inline RelaxResult relax_phase(const EnergyModel& m, const Vec& theta, const Vec& beta, const Vec& s0,
                               const EpConfig& cfg, const char* phase) {
  try {
    return m.settle(theta, beta, s0, cfg);
  } catch (const ConvergenceError& e) {
    throw ConvergenceError(std::string(phase) + ": " + e.reason(), e.best_residual());
  }
}

/// Two-phase estimate. The nudged phase starts from the free fixed point.
inline EpEstimate ep_update(const EnergyModel& m, const Vec& theta, const Vec& beta, const EpConfig& cfg) {
  cfg.validate();
  if (cfg.delta.size() != m.dim_beta()) throw DomainError("ep: delta has the wrong dimension");
  EpEstimate e;
  const RelaxResult free = relax_phase(m, theta, beta, m.initial_state(theta), cfg, "free phase");
  const Vec nudged_beta = beta + cfg.xi * cfg.delta;
  const RelaxResult nudged = relax_phase(m, theta, nudged_beta, free.s, cfg, "nudged phase");
  e.s_free = free.s;
  e.s_nudged = nudged.s;
  e.free_iterations = free.iterations;
  e.nudged_iterations = nudged.iterations;
  e.stat_free = m.dF_dtheta(theta, beta, free.s);
  e.stat_nudged = m.dF_dtheta(theta, nudged_beta, nudged.s);
  e.dtheta = -(e.stat_nudged - e.stat_free) / cfg.xi;
  return e;
}

/// Average of the +xi and -xi estimates: -(1/2xi)(dF/dtheta|_{+xi} - dF/dtheta|_{-xi}).
inline Vec ep_update_symmetric(const EnergyModel& m, const Vec& theta, const Vec& beta, const EpConfig& cfg) {
  EpConfig minus = cfg;
  minus.xi = -cfg.xi;
  return 0.5 * (ep_update(m, theta, beta, cfg).dtheta + ep_update(m, theta, beta, minus).dtheta);
}

struct AdjointSolution {
  Vec s_star;
  Vec lambda_star;
  double stationarity = 0.0;  ///< max |dL/ds| at (s*, lambda*)
};

struct ExactGradient {
  Vec dC_dtheta;
  AdjointSolution adjoint;
};

/// dC/dtheta from the Lagrangian L = delta . dF/dbeta + lambda . dF/ds with
/// second derivatives taken by central differences of the first-derivative
/// evaluators (step h).
inline ExactGradient exact_gradient(const EnergyModel& m, const Vec& theta, const Vec& beta, const EpConfig& cfg,
                                    double h = 1e-5) {
  cfg.validate();
  const Vec& delta = cfg.delta;
  const Vec s = relax_phase(m, theta, beta, m.initial_state(theta), cfg, "free phase").s;
  const int n = m.dim_state();

  Eigen::MatrixXd H(n, n);
  for (int i = 0; i < n; ++i) {
    Vec sp = s, sm = s;
    sp[i] += h;
    sm[i] -= h;
    H.col(i) = (m.dF_ds(theta, beta, sp) - m.dF_ds(theta, beta, sm)) / (2 * h);
  }
  H = 0.5 * (H + H.transpose()).eval();
  // d/ds (delta . dF/dbeta) = d/dbeta (dF/ds) along delta
  const Vec b = (m.dF_ds(theta, beta + h * delta, s) - m.dF_ds(theta, beta - h * delta, s)) / (2 * h);

  Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().cwiseAbs().minCoeff() > 1e-12 * (1.0 + H.norm())))
    throw DomainError("exact_gradient: singular Hessian at the fixed point");
  const Vec lambda = ldlt.solve(-b);

  const Vec dtheta_beta =
      (m.dF_dtheta(theta, beta + h * delta, s) - m.dF_dtheta(theta, beta - h * delta, s)) / (2 * h);
  Vec dtheta_s = Vec::Zero(m.dim_theta());
  const double ln = lambda.norm();
  if (ln > 0.0) {
    const double t = h / ln;
    dtheta_s = (m.dF_dtheta(theta, beta, s + t * lambda) - m.dF_dtheta(theta, beta, s - t * lambda)) / (2 * t);
  }
  ExactGradient out;
  out.dC_dtheta = dtheta_beta + dtheta_s;
  out.adjoint.s_star = s;
  out.adjoint.lambda_star = lambda;
  out.adjoint.stationarity = (b + H * lambda).lpNorm<Eigen::Infinity>();
  return out;
}

struct ModelCheck {
  bool ok = true;
  double worst_ds = 0.0;
  double worst_dtheta = 0.0;
  double worst_dbeta = 0.0;
  std::string message;
};

/// Compares the analytic partial derivatives with central differences of F
/// along random directions at random points around (theta, beta, s).
inline ModelCheck validate_model(const EnergyModel& m, const Vec& theta, const Vec& beta, const Vec& s,
                                 unsigned long long seed, int points = 10, double tol = 1e-5) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  auto random = [&](int n, double sc) {
    Vec v(n);
    for (int i = 0; i < n; ++i) v[i] = sc * nd(rng);
    return v;
  };
  ModelCheck c;
  auto rel = [](double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); };
  for (int p = 0; p < points; ++p) {
    const Vec th = theta + random(m.dim_theta(), 0.1);
    const Vec be = beta + random(m.dim_beta(), 0.1).cwiseAbs();
    const Vec st = s + random(m.dim_state(), 0.1);
    const double hs = 1e-6;
    const Vec ds = random(m.dim_state(), 1.0).normalized();
    const Vec dt = random(m.dim_theta(), 1.0).normalized();
    const Vec db = random(m.dim_beta(), 1.0).normalized();
    const double fs = (m.energy(th, be, st + hs * ds) - m.energy(th, be, st - hs * ds)) / (2 * hs);
    const double ft = (m.energy(th + hs * dt, be, st) - m.energy(th - hs * dt, be, st)) / (2 * hs);
    const double fb = (m.energy(th, be + hs * db, st) - m.energy(th, be - hs * db, st)) / (2 * hs);
    c.worst_ds = std::max(c.worst_ds, rel(fs, ds.dot(m.dF_ds(th, be, st))));
    c.worst_dtheta = std::max(c.worst_dtheta, rel(ft, dt.dot(m.dF_dtheta(th, be, st))));
    c.worst_dbeta = std::max(c.worst_dbeta, rel(fb, db.dot(m.dF_dbeta(th, be, st))));
  }
  if (c.worst_ds > tol) c.message += "dF/ds disagrees with finite differences; ";
  if (c.worst_dtheta > tol) c.message += "dF/dtheta disagrees with finite differences; ";
  if (c.worst_dbeta > tol) c.message += "dF/dbeta disagrees with finite differences; ";
  c.ok = c.message.empty();
  return c;
}

// ---------------------------------------------------------------------------
// Bundled models

/// F = 1/2 (s - theta)^2 + beta (s - v)^2, scalar everything.
class ScalarToyModel : public EnergyModel {
public:
  explicit ScalarToyModel(double v) : v_(v) {}

  int dim_theta() const override { return 1; }
  int dim_state() const override { return 1; }

  double energy(const Vec& th, const Vec& be, const Vec& s) const override {
    return 0.5 * (s[0] - th[0]) * (s[0] - th[0]) + be[0] * (s[0] - v_) * (s[0] - v_);
  }
  Vec dF_ds(const Vec& th, const Vec& be, const Vec& s) const override {
    return Vec::Constant(1, (s[0] - th[0]) + 2.0 * be[0] * (s[0] - v_));
  }
  Vec dF_dtheta(const Vec& th, const Vec&, const Vec& s) const override {
    return Vec::Constant(1, th[0] - s[0]);
  }
  Vec dF_dbeta(const Vec&, const Vec&, const Vec& s) const override {
    return Vec::Constant(1, (s[0] - v_) * (s[0] - v_));
  }

  /// dC/dtheta for C = delta (s* - v)^2, s* = (theta + 2 beta v) / (1 + 2 beta).
  double closed_form_gradient(double theta, double beta, double delta) const {
    const double s = (theta + 2.0 * beta * v_) / (1.0 + 2.0 * beta);
    return delta * 2.0 * (s - v_) / (1.0 + 2.0 * beta);
  }

private:
  double v_;
};

/// F = 1/2 s^T A s - s^T W x + beta/2 ||s - y||^2 with theta = vec(W)
/// (column-major) and A symmetric positive definite.
class QuadraticTeacherModel : public EnergyModel {
public:
  QuadraticTeacherModel(Eigen::MatrixXd A, Vec x, Vec y) : A_(std::move(A)), x_(std::move(x)), y_(std::move(y)) {
    if (A_.rows() != A_.cols() || A_.rows() != y_.size()) throw DomainError("quadratic model: shape mismatch");
    Eigen::LLT<Eigen::MatrixXd> llt(A_);
    if (llt.info() != Eigen::Success) throw DomainError("quadratic model: A must be positive definite");
  }

  /// Random instance: A = I + B B^T / n, unit-normal x and y.
  static QuadraticTeacherModel random(int n_state, int n_input, unsigned long long seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    Eigen::MatrixXd B(n_state, n_state);
    for (int i = 0; i < B.size(); ++i) B.data()[i] = nd(rng);
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n_state, n_state) + B * B.transpose() / n_state;
    Vec x(n_input), y(n_state);
    for (int i = 0; i < n_input; ++i) x[i] = nd(rng);
    for (int i = 0; i < n_state; ++i) y[i] = nd(rng);
    return QuadraticTeacherModel(std::move(A), std::move(x), std::move(y));
  }

  int dim_theta() const override { return int(y_.size() * x_.size()); }
  int dim_state() const override { return int(y_.size()); }

  const Eigen::MatrixXd& A() const noexcept { return A_; }

  Eigen::Map<const Eigen::MatrixXd> W(const Vec& th) const {
    return {th.data(), Eigen::Index(y_.size()), Eigen::Index(x_.size())};
  }

  double energy(const Vec& th, const Vec& be, const Vec& s) const override {
    return 0.5 * s.dot(A_ * s) - s.dot(W(th) * x_) + 0.5 * be[0] * (s - y_).squaredNorm();
  }
  Vec dF_ds(const Vec& th, const Vec& be, const Vec& s) const override {
    return A_ * s - W(th) * x_ + be[0] * (s - y_);
  }
  Vec dF_dtheta(const Vec&, const Vec&, const Vec& s) const override {
    const Eigen::MatrixXd g = -s * x_.transpose();
    return Eigen::Map<const Vec>(g.data(), g.size());
  }
  Vec dF_dbeta(const Vec&, const Vec&, const Vec& s) const override {
    return Vec::Constant(1, 0.5 * (s - y_).squaredNorm());
  }

  /// Fixed point by a direct solve.
  Vec fixed_point(const Vec& th, double beta) const {
    const Eigen::MatrixXd M = A_ + beta * Eigen::MatrixXd::Identity(A_.rows(), A_.cols());
    return M.ldlt().solve(W(th) * x_ + beta * y_);
  }

  /// C = 1/2 ||s* - y||^2 at beta.
  double cost(const Vec& th, double beta) const { return 0.5 * (fixed_point(th, beta) - y_).squaredNorm(); }

private:
  Eigen::MatrixXd A_;
  Vec x_, y_;
};

}  // namespace geoflow
