#pragma once

// Penalty-metric geometry of U(2^n) for n <= 3 qubits.
//
// Tangent vectors are Hamiltonians H = sum_w c_w sigma_w in the Pauli-string
// basis, with the curve convention dU/dt = -i H U (right-invariant). The
// metric is diagonal in that basis:
//
//   <H, J> = sum_w g_w c_w d_w,  g_w = 1 if weight(w) <= local_weight, else q
//
// which is tr(H P(J) + q H Q(J)) / 2^n because tr(sigma_a sigma_b) = 2^n delta_ab.
// The Lie bracket on Hamiltonians is [H, J] := -i (HJ - JH), the image of the
// matrix commutator of -iH and -iJ.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"
#include "rng.hpp"

namespace geoflow {

using cplx = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using RVec = Eigen::VectorXd;

/// Pauli strings on n qubits, indexed by w = sum_k d_k 4^(n-1-k) with digit
/// d_k in {I=0, X=1, Y=2, Z=3} for qubit k (leftmost label character). The
/// product sigma_a sigma_b is a phase times sigma_(a xor b).
class PauliAlgebra {
public:
  static constexpr int kMaxQubits = 3;

  /// Shared instance per qubit count.
  static const PauliAlgebra& get(int n) {
    check_n(n);
    static const std::array<PauliAlgebra, kMaxQubits> cache{PauliAlgebra(1), PauliAlgebra(2), PauliAlgebra(3)};
    return cache[std::size_t(n - 1)];
  }

  int qubits() const noexcept { return n_; }
  int dim() const noexcept { return dim_; }
  int matrix_size() const noexcept { return size_; }

  int weight(int w) const {
    int k = 0;
    for (int q = 0; q < n_; ++q, w >>= 2) k += (w & 3) != 0;
    return k;
  }

  std::string label(int w) const {
    std::string s(std::size_t(n_), 'I');
    for (int q = n_ - 1; q >= 0; --q, w >>= 2) s[std::size_t(q)] = "IXYZ"[w & 3];
    return s;
  }

  int index(std::string_view label) const {
    if (int(label.size()) != n_)
      throw DomainError("pauli: string '" + std::string(label) + "' does not have " + std::to_string(n_) +
                        " factors");
    int w = 0;
    for (char c : label) {
      const auto p = std::string_view("IXYZ").find(char(std::toupper(static_cast<unsigned char>(c))));
      if (p == std::string_view::npos) throw DomainError("pauli: bad factor '" + std::string(1, c) + "'");
      w = 4 * w + int(p);
    }
    return w;
  }

  const CMat& basis(int w) const { return basis_[std::size_t(w)]; }

  /// +1 or -1 when sigma_a sigma_b = +-i sigma_(a xor b), 0 when they commute.
  int eps(int a, int b) const { return eps_[std::size_t(a * dim_ + b)]; }

  /// [H, J] = -i (HJ - JH) in coefficients: 2 eps(a, b) h_a j_b onto a xor b.
  RVec bracket(const RVec& h, const RVec& j) const {
    check(h);
    check(j);
    RVec out = RVec::Zero(dim_);
    for (const auto& t : pairs_) out[t.c] += 2.0 * t.e * h[t.a] * j[t.b];
    return out;
  }

  /// sum_w h_w sigma_w. Each string has one nonzero per column, at row
  /// column xor flip(w).
  CMat matrix(const RVec& h) const {
    check(h);
    CMat m = CMat::Zero(size_, size_);
    for (int w = 0; w < dim_; ++w) {
      if (h[w] == 0.0) continue;
      const int f = flip_[std::size_t(w)];
      const cplx* ph = &phase_[std::size_t(w * size_)];
      for (int c = 0; c < size_; ++c) m(c ^ f, c) += h[w] * ph[c];
    }
    return m;
  }

  /// Re tr(sigma_w M) / 2^n: the coefficients of the Hermitian part of M.
  RVec coefficients(const CMat& m) const {
    if (m.rows() != size_ || m.cols() != size_) throw GridMismatch("pauli: matrix size does not match qubit count");
    RVec c(dim_);
    for (int w = 0; w < dim_; ++w) c[w] = (basis_[std::size_t(w)] * m).trace().real() / size_;
    return c;
  }

  void check(const RVec& h) const {
    if (h.size() != dim_) throw GridMismatch("pauli: coefficient vector has the wrong dimension");
  }

  static void check_n(int n) {
    if (n < 1 || n > kMaxQubits) throw DomainError("pauli: qubit count must be 1, 2 or 3");
  }

private:
  struct Term {
    int a, b, c;
    double e;
  };

  explicit PauliAlgebra(int n) : n_(n), dim_(1 << (2 * n)), size_(1 << n) {
    const std::array<CMat, 4> single = [] {
      std::array<CMat, 4> s;
      for (auto& m : s) m = CMat::Zero(2, 2);
      s[0] << 1, 0, 0, 1;
      s[1] << 0, 1, 1, 0;
      s[2] << 0, cplx(0, -1), cplx(0, 1), 0;
      s[3] << 1, 0, 0, -1;
      return s;
    }();
    basis_.reserve(std::size_t(dim_));
    for (int w = 0; w < dim_; ++w) {
      CMat m = CMat::Identity(1, 1);
      for (int q = n_ - 1; q >= 0; --q) {
        const CMat& f = single[std::size_t((w >> (2 * q)) & 3)];
        CMat k(m.rows() * 2, m.cols() * 2);
        for (int r = 0; r < m.rows(); ++r)
          for (int c = 0; c < m.cols(); ++c) k.block(2 * r, 2 * c, 2, 2) = m(r, c) * f;
        m = std::move(k);
      }
      int f = 0;
      for (int r = 0; r < size_; ++r)
        if (m(r, 0) != cplx(0.0)) f = r;
      flip_.push_back(f);
      for (int c = 0; c < size_; ++c) phase_.push_back(m(c ^ f, c));
      basis_.push_back(std::move(m));
    }
    eps_.assign(std::size_t(dim_ * dim_), 0);
    for (int a = 0; a < dim_; ++a)
      for (int b = 0; b < dim_; ++b) {
        // phase of sigma_a sigma_b as a power of i, digit by digit
        int k = 0;
        for (int q = 0; q < n_; ++q) {
          const int p = (a >> (2 * q)) & 3, r = (b >> (2 * q)) & 3;
          if (p == 0 || r == 0 || p == r) continue;
          k += (r == p % 3 + 1) ? 1 : 3;
        }
        k &= 3;
        const int e = k == 1 ? 1 : (k == 3 ? -1 : 0);
        eps_[std::size_t(a * dim_ + b)] = std::int8_t(e);
        if (e != 0) pairs_.push_back({a, b, a ^ b, double(e)});
      }
  }

  int n_, dim_, size_;
  std::vector<CMat> basis_;
  std::vector<int> flip_;
  std::vector<cplx> phase_;
  std::vector<std::int8_t> eps_;
  std::vector<Term> pairs_;
};

/// A Hamiltonian in Pauli coordinates.
struct PauliHamiltonian {
  int n;
  RVec coeffs;

  static PauliHamiltonian zero(int n) { return {n, RVec::Zero(PauliAlgebra::get(n).dim())}; }
  static PauliHamiltonian single(int n, std::string_view label, double c) {
    auto h = zero(n);
    h.coeffs[PauliAlgebra::get(n).index(label)] = c;
    return h;
  }
};

class PenaltyMetric {
public:
  PenaltyMetric(int n, double q, int local_weight = 2) : n_(n), q_(q), local_(local_weight) {
    PauliAlgebra::check_n(n);
    if (!std::isfinite(q) || q < 1.0) throw DomainError("penalty metric: q must be finite and >= 1");
    if (local_weight < 1) throw DomainError("penalty metric: local weight must be at least 1");
    const auto& alg = algebra();
    g_.resize(alg.dim());
    for (int w = 0; w < alg.dim(); ++w) g_[w] = alg.weight(w) <= local_ ? 1.0 : q_;
  }

  int qubits() const noexcept { return n_; }
  double q() const noexcept { return q_; }
  int local_weight() const noexcept { return local_; }
  const PauliAlgebra& algebra() const { return PauliAlgebra::get(n_); }
  /// Diagonal of the metric operator G in Pauli coordinates.
  const RVec& diag() const noexcept { return g_; }
  int dim() const noexcept { return int(g_.size()); }

private:
  int n_;
  double q_;
  int local_;
  RVec g_;
};

inline double metric_inner(const RVec& h, const RVec& j, const PenaltyMetric& g) {
  if (h.size() != g.dim() || j.size() != g.dim()) throw GridMismatch("metric_inner: dimension mismatch");
  return (h.array() * g.diag().array() * j.array()).sum();
}

inline double metric_inner(const PauliHamiltonian& h, const PauliHamiltonian& j, const PenaltyMetric& g) {
  if (h.n != g.qubits() || j.n != g.qubits()) throw GridMismatch("metric_inner: qubit counts differ");
  return metric_inner(h.coeffs, j.coeffs, g);
}

inline double unitarity_defect(const CMat& u) {
  return (u.adjoint() * u - CMat::Identity(u.rows(), u.cols())).norm();
}

/// Nearest unitary in Frobenius norm (the unitary polar factor).
inline CMat polar_unitary(const CMat& m) {
  Eigen::JacobiSVD<CMat> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return svd.matrixU() * svd.matrixV().adjoint();
}

/// Polar factor of a matrix already close to unitary: Newton-Schulz steps
/// U <- U (3 - U^H U) / 2, which converge quadratically while |U^H U - 1| < 1.
inline CMat near_unitary_polar(CMat u) {
  const Eigen::Index n = u.rows();
  for (int it = 0; it < 8; ++it) {
    const CMat e = u.adjoint() * u - CMat::Identity(n, n);
    const double d = e.norm();
    if (!(d < 0.5)) return polar_unitary(u);
    if (d < 1e-15) break;
    u -= 0.5 * u * e;
  }
  return u;
}

/// A validated element of U(2^n).
struct UnitaryPoint {
  int n;
  CMat matrix;

  static UnitaryPoint identity(int n) {
    const int s = PauliAlgebra::get(n).matrix_size();
    return {n, CMat::Identity(s, s)};
  }

  /// Accepts matrices within `tol` of unitary and projects them the rest of the way.
  static UnitaryPoint from_matrix(int n, const CMat& m, double tol = 1e-6) {
    const int s = PauliAlgebra::get(n).matrix_size();
    if (m.rows() != s || m.cols() != s)
      throw DomainError("unitary: expected a " + std::to_string(s) + "x" + std::to_string(s) + " matrix");
    if (!m.allFinite()) throw DomainError("unitary: non-finite entry");
    const double d = unitarity_defect(m);
    if (!(d <= tol)) throw DomainError("unitary: matrix is not unitary (|U^H U - 1|_F = " + std::to_string(d) + ")");
    return {n, polar_unitary(m)};
  }
};

/// exp(-i angle sigma_w) = cos(angle) 1 - i sin(angle) sigma_w.
inline CMat pauli_exp(int n, std::string_view label, double angle) {
  const auto& alg = PauliAlgebra::get(n);
  const CMat& s = alg.basis(alg.index(label));
  return std::cos(angle) * CMat::Identity(s.rows(), s.cols()) - cplx(0, std::sin(angle)) * s;
}

/// exp(-i H) for Hermitian H via its eigendecomposition.
inline CMat hamiltonian_exp(const CMat& h, double t = 1.0) {
  Eigen::SelfAdjointEigenSolver<CMat> es(h);
  const RVec& lam = es.eigenvalues();
  Eigen::VectorXcd ph(lam.size());
  for (Eigen::Index k = 0; k < lam.size(); ++k) ph[k] = std::exp(cplx(0, -t * lam[k]));
  return es.eigenvectors() * ph.asDiagonal() * es.eigenvectors().adjoint();
}

/// Principal H with exp(-i H) = U (eigenphases in (-pi, pi]).
inline CMat principal_hamiltonian(const CMat& u) {
  Eigen::ComplexSchur<CMat> schur(u);
  const CMat& t = schur.matrixT();
  Eigen::VectorXd lam(t.rows());
  for (Eigen::Index k = 0; k < t.rows(); ++k) lam[k] = -std::arg(t(k, k));
  const CMat& q = schur.matrixU();
  CMat h = q * lam.asDiagonal() * q.adjoint();
  return 0.5 * (h + h.adjoint());
}

/// min over phi of |U - e^{i phi} V|_F.
inline double phase_gap(const CMat& u, const CMat& v) {
  const double n = double(u.rows());
  const double t = std::abs((v.adjoint() * u).trace());
  return std::sqrt(std::max(0.0, 2.0 * n - 2.0 * t));
}

// ---------------------------------------------------------------- geodesics

struct GeodesicPath {
  int steps;
  std::vector<CMat> U;  ///< U(k / steps), k = 0..steps
  std::vector<RVec> H;  ///< H(k / steps)
};

namespace detail {

struct EaState {
  RVec L;  ///< momentum G(H)
  CMat U;
};

inline EaState ea_rhs(const EaState& s, const PenaltyMetric& g) {
  const auto& alg = g.algebra();
  const RVec h = s.L.cwiseQuotient(g.diag());
  // dL/dt = [H, L]; dU/dt = -i H U
  return {alg.bracket(h, s.L), cplx(0, -1) * (alg.matrix(h) * s.U)};
}

inline EaState ea_axpy(const EaState& s, double a, const EaState& d) { return {s.L + a * d.L, s.U + a * d.U}; }

inline EaState ea_step(const EaState& s, double dt, const PenaltyMetric& g) {
  const EaState k1 = ea_rhs(s, g);
  const EaState k2 = ea_rhs(ea_axpy(s, dt / 2, k1), g);
  const EaState k3 = ea_rhs(ea_axpy(s, dt / 2, k2), g);
  const EaState k4 = ea_rhs(ea_axpy(s, dt, k3), g);
  EaState out{s.L + dt / 6 * (k1.L + 2 * k2.L + 2 * k3.L + k4.L),
              s.U + dt / 6 * (k1.U + 2 * k2.U + 2 * k3.U + k4.U)};
  out.U = near_unitary_polar(out.U);
  return out;
}

template <class Visit>
void ea_integrate(const RVec& h0, const PenaltyMetric& g, int T, Visit&& visit) {
  if (T < 1) throw DomainError("euler_arnold_shoot: need at least one step");
  g.algebra().check(h0);
  if (!h0.allFinite()) throw DomainError("euler_arnold_shoot: non-finite initial Hamiltonian");
  const int s = g.algebra().matrix_size();
  EaState st{h0.cwiseProduct(g.diag()), CMat::Identity(s, s)};
  visit(0, st);
  const double dt = 1.0 / T;
  for (int k = 1; k <= T; ++k) {
    st = ea_step(st, dt, g);
    if (!st.L.allFinite() || !st.U.allFinite()) throw BlowUpError("euler_arnold_shoot: non-finite state", std::size_t(k));
    visit(k, st);
  }
}

}  // namespace detail

/// Geodesic from the identity with initial Hamiltonian H0 over t in [0, 1].
inline GeodesicPath euler_arnold_shoot(const RVec& h0, const PenaltyMetric& g, int T) {
  GeodesicPath p{T, {}, {}};
  p.U.reserve(std::size_t(T) + 1);
  p.H.reserve(std::size_t(T) + 1);
  detail::ea_integrate(h0, g, T, [&](int, const detail::EaState& s) {
    p.U.push_back(s.U);
    p.H.push_back(s.L.cwiseQuotient(g.diag()));
  });
  return p;
}

inline GeodesicPath euler_arnold_shoot(const PauliHamiltonian& h0, const PenaltyMetric& g, int T) {
  if (h0.n != g.qubits()) throw GridMismatch("euler_arnold_shoot: qubit counts differ");
  return euler_arnold_shoot(h0.coeffs, g, T);
}

/// U(1) only.
inline CMat geodesic_endpoint(const RVec& h0, const PenaltyMetric& g, int T) {
  CMat end;
  detail::ea_integrate(h0, g, T, [&](int k, const detail::EaState& s) {
    if (k == T) end = s.U;
  });
  return end;
}

// ----------------------------------------------------------------- distance

struct DistanceOptions {
  int restarts = 4;
  int steps = 64;
  double tol = 1e-3;  ///< endpoint gap accepted as a hit
  int max_iters = 20;  ///< Levenberg-Marquardt iterations per continuation or homotopy stage
  std::uint64_t seed = 0;
};

struct DistanceResult {
  bool found = false;
  double distance = std::numeric_limits<double>::infinity();
  RVec H0;                        ///< shortest hit (or best-gap run when nothing hit)
  double gap = std::numeric_limits<double>::infinity();
  std::vector<double> run_length;  ///< per restart
  std::vector<double> run_gap;     ///< per restart
};

namespace detail {

/// Phase-aligned endpoint residual, real and imaginary parts stacked.
inline RVec endpoint_residual(const CMat& u, const CMat& target) {
  const cplx tr = (target.adjoint() * u).trace();
  const cplx ph = std::abs(tr) > 0.0 ? tr / std::abs(tr) : cplx(1.0);
  const CMat d = u - ph * target;
  RVec r(2 * d.size());
  for (Eigen::Index k = 0; k < d.size(); ++k) {
    r[2 * k] = d.data()[k].real();
    r[2 * k + 1] = d.data()[k].imag();
  }
  return r;
}

/// Free coordinates are every Pauli string except the identity.
inline RVec embed(const RVec& x) {
  RVec h(x.size() + 1);
  h[0] = 0.0;
  h.tail(x.size()) = x;
  return h;
}

struct LmProblem {
  const CMat& target;
  const PenaltyMetric& g;
  int T;
  double mu;

  RVec residual(const RVec& x) const {
    const RVec r = endpoint_residual(geodesic_endpoint(embed(x), g, T), target);
    RVec out(r.size() + x.size());
    out.head(r.size()) = r;
    out.tail(x.size()) = std::sqrt(mu) * g.diag().tail(x.size()).cwiseSqrt().cwiseProduct(x);
    return out;
  }
};

inline RVec levenberg_marquardt(const LmProblem& p, RVec x, int max_iters) {
  constexpr double h = 1e-7;
  RVec r;
  try {
    r = p.residual(x);
  } catch (const BlowUpError&) {
    return x;
  }
  double cost = r.squaredNorm();
  double lambda = 1e-3;
  for (int it = 0; it < max_iters && cost > 1e-26; ++it) {
    Eigen::MatrixXd J(r.size(), x.size());
    try {
      for (Eigen::Index k = 0; k < x.size(); ++k) {
        RVec a = x;
        a[k] += h;
        J.col(k) = (p.residual(a) - r) / h;
      }
    } catch (const BlowUpError&) {
      return x;
    }
    const Eigen::MatrixXd A = J.transpose() * J;
    const RVec grad = J.transpose() * r;
    bool accepted = false;
    for (int tries = 0; tries < 30 && !accepted; ++tries) {
      Eigen::MatrixXd M = A;
      M.diagonal().array() += lambda * (1.0 + A.diagonal().array());
      const RVec step = M.ldlt().solve(-grad);
      const RVec xn = x + step;
      RVec rn;
      try {
        rn = p.residual(xn);
      } catch (const BlowUpError&) {
        lambda *= 4;
        continue;
      }
      const double cn = rn.squaredNorm();
      if (cn < cost) {
        const double drop = cost - cn;
        x = xn;
        r = std::move(rn);
        cost = cn;
        lambda = std::max(lambda / 3, 1e-12);
        accepted = true;
        if (step.norm() < 1e-12 * (1.0 + x.norm()) || drop < 1e-16 * cost) return x;
      } else {
        lambda *= 4;
      }
    }
    if (!accepted) break;
  }
  return x;
}

}  // namespace detail

namespace detail {

inline double endpoint_gap(const RVec& x, const PenaltyMetric& g, const CMat& target, int T) {
  try {
    return phase_gap(geodesic_endpoint(embed(x), g, T), target);
  } catch (const BlowUpError&) {
    return std::numeric_limits<double>::infinity();
  }
}

/// Tracks a geodesic hit from the bi-invariant metric (where the principal
/// logarithm is exact) up to the requested q, growing q geometrically and
/// shrinking the growth factor whenever a stage loses the target.
inline std::optional<RVec> continue_in_q(const CMat& target, const PenaltyMetric& g, RVec x, const DistanceOptions& opt) {
  const double stage_tol = 0.1 * opt.tol;
  const auto solve = [&](const PenaltyMetric& m, const RVec& start) -> std::optional<RVec> {
    RVec y = levenberg_marquardt({target, m, opt.steps, 0.0}, start, opt.max_iters);
    if (endpoint_gap(y, m, target, opt.steps) < stage_tol) return y;
    return std::nullopt;
  };
  double q = 1.0, ratio = 2.0;
  auto first = solve(PenaltyMetric(g.qubits(), 1.0, g.local_weight()), x);
  if (!first) return std::nullopt;
  x = *first;
  while (q < g.q()) {
    const double qn = std::min(g.q(), q * ratio);
    if (auto y = solve(PenaltyMetric(g.qubits(), qn, g.local_weight()), x)) {
      x = *y;
      q = qn;
      ratio = std::min(2.0, ratio * ratio);
    } else {
      ratio = std::sqrt(ratio);
      if (ratio < 1.01) return std::nullopt;
    }
  }
  return x;
}

}  // namespace detail

/// Shortest geodesic found from the identity to `target` up to global phase.
/// Run 0 continues the principal logarithm from q = 1 to the requested q;
/// later runs perturb that solution and re-solve under a decreasing length
/// penalty mu in {1e-2, 1e-4, 0}. The reported length sqrt(<H0, H0>) of the
/// shortest hit is an upper bound on the distance.
inline DistanceResult geodesic_distance(const UnitaryPoint& target, const PenaltyMetric& g,
                                        const DistanceOptions& opt = {}) {
  if (target.n != g.qubits()) throw GridMismatch("geodesic_distance: qubit counts differ");
  if (opt.restarts < 1 || opt.steps < 1 || !(opt.tol > 0.0) || opt.max_iters < 1)
    throw DomainError("geodesic_distance: bad options");
  const auto& alg = g.algebra();
  const int free = alg.dim() - 1;
  const RVec log_start = alg.coefficients(principal_hamiltonian(target.matrix)).tail(free);
  const Rng base = Rng(opt.seed).split("geodesic_distance");

  DistanceResult best;
  double closest_gap = std::numeric_limits<double>::infinity();
  RVec closest_h0 = RVec::Zero(alg.dim());
  RVec anchor = log_start;
  const auto record = [&](const RVec& x) {
    const double gap = detail::endpoint_gap(x, g, target.matrix, opt.steps);
    const RVec h0 = detail::embed(x);
    const double len = std::sqrt(metric_inner(h0, h0, g));
    best.run_length.push_back(len);
    best.run_gap.push_back(gap);
    if (gap < closest_gap) {
      closest_gap = gap;
      closest_h0 = h0;
    }
    if (gap < opt.tol && len < best.distance) {
      best.found = true;
      best.distance = len;
      best.H0 = h0;
      best.gap = gap;
    }
  };

  if (auto x = detail::continue_in_q(target.matrix, g, log_start, opt)) anchor = *x;
  record(anchor);
  for (int run = 1; run < opt.restarts; ++run) {
    Rng rng = base.split("restart:" + std::to_string(run));
    RVec x = anchor;
    const double scale = 0.25 * std::max(1.0, anchor.norm());
    for (auto& v : x) v += scale * rng.normal() / std::sqrt(double(free));
    for (double mu : {1e-2, 1e-4, 0.0}) x = detail::levenberg_marquardt({target.matrix, g, opt.steps, mu}, x, opt.max_iters);
    record(x);
  }
  if (!best.found) {
    best.H0 = closest_h0;
    best.gap = closest_gap;
  }
  return best;
}

// ---------------------------------------------------------------- curvature

/// Metric adjoint of ad: <ad*_x y, z> = <y, [x, z]> for every z.
inline RVec metric_adjoint(const RVec& x, const RVec& y, const PenaltyMetric& g) {
  const auto& alg = g.algebra();
  alg.check(x);
  alg.check(y);
  const RVec gy = g.diag().cwiseProduct(y);
  RVec out = RVec::Zero(alg.dim());
  for (int a = 0; a < alg.dim(); ++a) {
    if (x[a] == 0.0) continue;
    for (int b = 0; b < alg.dim(); ++b) {
      const int e = alg.eps(a, b);
      if (e != 0) out[b] += 2.0 * e * x[a] * gy[a ^ b];
    }
  }
  return out.cwiseQuotient(g.diag());
}

/// Levi-Civita connection on invariant fields: 1/2 ([x, y] - ad*_x y - ad*_y x).
inline RVec invariant_connection(const RVec& x, const RVec& y, const PenaltyMetric& g) {
  return 0.5 * (g.algebra().bracket(x, y) - metric_adjoint(x, y, g) - metric_adjoint(y, x, g));
}

/// Sectional curvature of span{x, y}; the pair need not be orthonormal.
inline double sectional_curvature(const RVec& x, const RVec& y, const PenaltyMetric& g) {
  const double xx = metric_inner(x, x, g), yy = metric_inner(y, y, g), xy = metric_inner(x, y, g);
  const double area = xx * yy - xy * xy;
  if (!(area > 1e-12 * xx * yy) || !(xx > 0.0)) throw DomainError("sectional_curvature: degenerate pair");
  const auto& alg = g.algebra();
  const auto nabla = [&](const RVec& a, const RVec& b) { return invariant_connection(a, b, g); };
  const RVec ryy = nabla(x, nabla(y, y)) - nabla(y, nabla(x, y)) - nabla(alg.bracket(x, y), y);
  return metric_inner(ryy, x, g) / area;
}

inline double sectional_curvature(const PauliHamiltonian& x, const PauliHamiltonian& y, const PenaltyMetric& g) {
  if (x.n != g.qubits() || y.n != g.qubits()) throw GridMismatch("sectional_curvature: qubit counts differ");
  return sectional_curvature(x.coeffs, y.coeffs, g);
}

/// Curvatures below this count as negative; it absorbs round-off on flat planes.
inline constexpr double kCurvatureFloor = 1e-10;

struct CurvatureCensus {
  std::vector<double> curvature;  ///< one per sampled plane, in sample order
  double fraction_negative = 0.0;
  double min = 0.0, max = 0.0, mean = 0.0, median = 0.0;
  std::vector<int> histogram;  ///< equal-width bins over [min, max]
};

/// Gaussian sample in G-orthonormal coordinates over the non-identity strings.
inline RVec random_tangent(const PenaltyMetric& g, Rng& rng) {
  RVec v = RVec::Zero(g.dim());
  for (int w = 1; w < g.dim(); ++w) v[w] = rng.normal() / std::sqrt(g.diag()[w]);
  return v;
}

inline CurvatureCensus curvature_census(const PenaltyMetric& g, int samples, std::uint64_t seed, int bins = 20) {
  if (samples < 100) throw DomainError("curvature_census: need at least 100 samples");
  if (bins < 1) throw DomainError("curvature_census: need at least one bin");
  Rng rng = Rng(seed).split("curvature_census");
  CurvatureCensus c;
  c.curvature.reserve(std::size_t(samples));
  int negative = 0;
  while (int(c.curvature.size()) < samples) {
    RVec x = random_tangent(g, rng), y = random_tangent(g, rng);
    x /= std::sqrt(metric_inner(x, x, g));
    y -= metric_inner(x, y, g) * x;
    const double ny = metric_inner(y, y, g);
    if (!(ny > 1e-12)) continue;
    y /= std::sqrt(ny);
    const double k = sectional_curvature(x, y, g);
    negative += k < -kCurvatureFloor;
    c.curvature.push_back(k);
  }
  std::vector<double> sorted = c.curvature;
  std::sort(sorted.begin(), sorted.end());
  c.fraction_negative = double(negative) / samples;
  c.min = sorted.front();
  c.max = sorted.back();
  double sum = 0.0;
  for (double k : c.curvature) sum += k;
  c.mean = sum / samples;
  c.median = samples % 2 ? sorted[std::size_t(samples / 2)]
                         : 0.5 * (sorted[std::size_t(samples / 2 - 1)] + sorted[std::size_t(samples / 2)]);
  c.histogram.assign(std::size_t(bins), 0);
  const double width = (c.max - c.min) / bins;
  for (double k : c.curvature) {
    int b = width > 0.0 ? int((k - c.min) / width) : 0;
    c.histogram[std::size_t(std::clamp(b, 0, bins - 1))]++;
  }
  return c;
}

// ------------------------------------------------------------------ targets

/// One complex entry: "a", "bi", "a+bi", "a-bi", "i", "-i", "a+i".
inline cplx parse_complex(std::string_view tok) {
  const std::string s(tok);
  if (s.empty()) throw DomainError("complex: empty entry");
  const char* p = s.c_str();
  const char* end = p + s.size();
  auto imag_unit = [&](const char* q, double sign) -> std::pair<double, const char*> {
    if (q < end && *q == 'i') return {sign, q + 1};
    return {0.0, nullptr};
  };
  // bare imaginary unit with optional sign
  {
    double sign = 1.0;
    const char* q = p;
    if (*q == '+' || *q == '-') sign = (*q++ == '-') ? -1.0 : 1.0;
    auto [v, after] = imag_unit(q, sign);
    if (after == end) return {0.0, v};
  }
  char* e1 = nullptr;
  const double a = std::strtod(p, &e1);
  if (e1 == p) throw DomainError("complex: cannot parse '" + s + "'");
  if (e1 == end) return {a, 0.0};
  if (*e1 == 'i' && e1 + 1 == end) return {0.0, a};
  if (*e1 != '+' && *e1 != '-') throw DomainError("complex: cannot parse '" + s + "'");
  const double sign = *e1 == '-' ? -1.0 : 1.0;
  if (auto [v, after] = imag_unit(e1 + 1, sign); after == end) return {a, v};
  char* e2 = nullptr;
  const double b = std::strtod(e1, &e2);
  if (e2 == e1 || e2 + 1 != end || *e2 != 'i') throw DomainError("complex: cannot parse '" + s + "'");
  return {a, b};
}

/// Whitespace-separated rows of complex entries, one matrix row per line;
/// blank lines and '#' comments are skipped.
inline CMat read_complex_matrix(std::istream& in) {
  std::vector<std::vector<cplx>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.resize(h);
    std::istringstream ls(line);
    std::vector<cplx> row;
    std::string tok;
    while (ls >> tok) {
      try {
        row.push_back(parse_complex(tok));
      } catch (const DomainError& e) {
        throw DomainError("line " + std::to_string(lineno) + ": " + e.what());
      }
    }
    if (row.empty()) continue;
    if (!rows.empty() && row.size() != rows.front().size())
      throw DomainError("line " + std::to_string(lineno) + ": ragged matrix row");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DomainError("matrix file is empty");
  CMat m(Eigen::Index(rows.size()), Eigen::Index(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(Eigen::Index(r), Eigen::Index(c)) = rows[r][c];
  return m;
}

/// `exp:<pauli-string>:<angle>` or the path of a matrix file.
inline UnitaryPoint parse_target(std::string_view spec, int n) {
  PauliAlgebra::check_n(n);
  if (spec.substr(0, 4) == "exp:") {
    const auto rest = spec.substr(4);
    const auto colon = rest.find(':');
    if (colon == std::string_view::npos) throw DomainError("target: expected exp:<pauli-string>:<angle>");
    const std::string angle_s(rest.substr(colon + 1));
    char* end = nullptr;
    const double angle = std::strtod(angle_s.c_str(), &end);
    if (angle_s.empty() || *end != '\0' || !std::isfinite(angle))
      throw DomainError("target: bad angle '" + angle_s + "'");
    return {n, pauli_exp(n, rest.substr(0, colon), angle)};
  }
  std::ifstream f{std::string(spec)};
  if (!f) throw IoError("target: cannot open matrix file '" + std::string(spec) + "'");
  return UnitaryPoint::from_matrix(n, read_complex_matrix(f));
}

}  // namespace geoflow
