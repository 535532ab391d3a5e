#pragma once

// Experiment suite: one function per numbered check, each returning a
// verdict with a one-line measurement and writing its artifacts (CSV, PGM,
// GFLD) into the run directory. run_suite() adds `manifest.txt`.
//
// Every random draw comes from Rng(seed).split(<check label>), so a check's
// output depends only on the seed and the configuration.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "config.hpp"
#include "ep.hpp"
#include "field_io.hpp"
#include "flow.hpp"
#include "lddmm.hpp"
#include "shooting.hpp"
#include "shooting_ep.hpp"
#include "synthetic.hpp"
#include "unitary.hpp"
#include "version.hpp"

namespace geoflow {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Output helpers

/// `%.<digits>g` formatting for human-readable measurements.
inline std::string fmt(double v, int digits = 3) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

inline std::string percent(double fraction, int digits = 3) { return fmt(100.0 * fraction, digits) + "%"; }

/// CSV file with a fixed header; doubles are written in shortest round-trip form.
class CsvWriter {
public:
  CsvWriter(const fs::path& path, const std::vector<std::string>& header) : path_(path), out_(detail::open_out(path)) {
    columns_ = header.size();
    for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
    out_ << '\n';
  }

  template <class... A>
  void row(const A&... cells) {
    static_assert(sizeof...(A) > 0);
    if (sizeof...(A) != columns_) throw DomainError("csv '" + path_.string() + "': row width differs from header");
    std::size_t i = 0;
    ((out_ << (i++ ? "," : "") << cell(cells)), ...);
    out_ << '\n';
    if (!out_) throw IoError("write failed for '" + path_.string() + "'");
  }

private:
  template <class T>
  static std::string cell(const T& v) {
    if constexpr (std::is_floating_point_v<T>) return detail::format_real(double(v));
    else if constexpr (std::is_integral_v<T>) return std::to_string(v);
    else return std::string(v);
  }

  fs::path path_;
  std::ofstream out_;
  std::size_t columns_ = 0;
};

inline void write_trace_csv(const fs::path& path, const std::vector<DescentStep>& trace) {
  CsvWriter csv(path, {"iter", "energy", "kinetic", "data", "step"});
  for (const auto& s : trace) csv.row(s.iter, s.energy, s.kinetic, s.data, s.step);
}

inline void write_kinetic_csv(const fs::path& path, const ShootingState& s) {
  CsvWriter csv(path, {"t", "kinetic_energy"});
  const auto e = kinetic_series(s);
  for (std::size_t j = 0; j < e.size(); ++j) csv.row(double(j) / s.steps, e[j]);
}

inline void write_curvature_csv(const fs::path& path, const CurvatureCensus& c) {
  CsvWriter csv(path, {"plane_id", "curvature"});
  for (std::size_t i = 0; i < c.curvature.size(); ++i) csv.row(i, c.curvature[i]);
}

// ---------------------------------------------------------------------------
// Checks

struct CheckResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string measured;
};

struct SuiteContext {
  ExperimentConfig cfg;
  fs::path out;
  std::optional<fs::path> i0, i1;  ///< registration inputs; synthetic blobs when absent

  Rng rng(std::string_view label) const { return Rng(cfg.seed).split(label); }

  /// Census cache so checks sharing a (n, q) pair reuse one sample set.
  const CurvatureCensus& census(int n, double q) const {
    const auto key = std::make_pair(n, q);
    auto it = censuses_.find(key);
    if (it == censuses_.end()) {
      const PenaltyMetric g(n, q, cfg.unitary_local_weight);
      const std::uint64_t seed = rng("curvature_census").next_u64();
      it = censuses_.emplace(key, curvature_census(g, cfg.unitary_samples, seed)).first;
      write_curvature_csv(out / ("curvature_n" + std::to_string(n) + "_q" + fmt(q, 6) + ".csv"), it->second);
    }
    return it->second;
  }

private:
  mutable std::map<std::pair<int, double>, CurvatureCensus> censuses_;
};

struct BlobPair {
  ScalarField I0, I1;
};

/// Width-`width` blobs displaced by `shift` cells along x about the grid centre.
inline BlobPair blob_pair(int n, double shift, double width, double contrast = 1.0) {
  const Grid g(n, n);
  const double c = n / 2.0;
  return {gaussian_blob(g, c - shift / 2, c, width, contrast), gaussian_blob(g, c + shift / 2, c, width, contrast)};
}

/// The registration pair: the configured input images, or the 32x32 shifted blob.
inline BlobPair registration_pair(const SuiteContext& ctx) {
  if (ctx.i0 && ctx.i1) {
    BlobPair p{read_pgm(*ctx.i0), read_pgm(*ctx.i1)};
    require_same_grid(p.I0.grid(), p.I1.grid(), "registration inputs");
    return p;
  }
  return blob_pair(32, 3.0, 4.0);
}

/// 1. Discrete-adjoint LDDMM gradient against central differences of the energy.
inline CheckResult check_lddmm_gradient(const SuiteContext& ctx) {
  const auto& cfg = ctx.cfg;
  const auto b = blob_pair(16, 3.0, 4.0);
  const Grid& g = b.I0.grid();
  const int T = 8;
  const double eps = 1e-4;
  const LddmmProblem p(b.I0, b.I1, KernelSpec(g, cfg.kernel_sigma), cfg.lddmm_sigma(), T);
  Rng rng = ctx.rng("lddmm_gradient");
  auto velocity = [&](double max_len) {
    std::vector<VectorField> f;
    for (int j = 0; j < T; ++j) f.push_back(smooth_field(g, rng, max_len, 4, 2));
    return TimeVaryingVelocity(std::move(f));
  };
  CsvWriter csv(ctx.out / "lddmm_gradient_check.csv", {"sample", "adjoint", "finite_difference", "relative_error"});
  double worst = 0.0;
  for (int s = 0; s < 10; ++s) {
    const auto u = velocity(0.5);
    const auto d = velocity(1.0);
    TimeVaryingVelocity up = u, um = u;
    up.axpy(eps, d);
    um.axpy(-eps, d);
    const double fd = (lddmm_energy(p, up).total - lddmm_energy(p, um).total) / (2 * eps);
    const double an = time_v_inner(lddmm_gradient(p, u).per_step, d, p.kernel);
    const double rel = std::abs(an - fd) / std::abs(fd);
    worst = std::max(worst, rel);
    csv.row(s, an, fd, rel);
  }
  return {1, "lddmm-gradient", worst < 1e-3, "max relative error " + fmt(worst) + " over 10 samples (< 1e-3)"};
}

/// 2. LDDMM registration of the shifted blob.
inline CheckResult check_lddmm_registration(const SuiteContext& ctx) {
  const auto& cfg = ctx.cfg;
  const auto b = registration_pair(ctx);
  const LddmmProblem p(b.I0, b.I1, KernelSpec(b.I0.grid(), cfg.kernel_sigma), cfg.lddmm_sigma(), cfg.flow_steps);
  DescentOptions opt = cfg.descent();
  opt.max_iters = std::min(opt.max_iters, 200);
  const auto r = register_lddmm(p, opt);
  write_trace_csv(ctx.out / "lddmm_trace.csv", r.trace);
  write_pgm(ctx.out / "lddmm_warped.pgm", warp(p.I0, r.g));
  write_gfld(ctx.out / "lddmm_displacement.gfld", r.g.displacement());

  bool monotone = true;
  for (std::size_t i = 1; i < r.trace.size(); ++i) monotone = monotone && r.trace[i].energy <= r.trace[i - 1].energy;
  const double ratio = r.trace.back().data / r.trace.front().data;
  const bool jac = r.diagnostics.diffeomorphic && r.diagnostics.min_jacdet > 0.0;
  return {2, "lddmm-registration", ratio <= 0.1 && monotone && jac,
          "data term at " + percent(ratio) + " of initial after " + std::to_string(r.iterations) +
              " iterations (<= 10%), trace " + (monotone ? "monotone" : "not monotone") + ", min Jacobian " +
              fmt(r.diagnostics.min_jacdet) + " (> 0)"};
}

/// 3. Kinetic-energy conservation and fourth-order convergence of shoot().
inline CheckResult check_shooting_conservation(const SuiteContext& ctx) {
  const auto b = blob_pair(32, 3.0, 4.0);
  const KernelSpec k(b.I0.grid(), ctx.cfg.kernel_sigma);
  const ScalarField P0 = 100.0 * (b.I1 - b.I0);
  const auto s32 = shoot(b.I0, P0, k, 32);
  const auto s128 = shoot(b.I0, P0, k, 128);
  write_kinetic_csv(ctx.out / "shooting_kinetic_T32.csv", s32);
  write_kinetic_csv(ctx.out / "shooting_kinetic_T128.csv", s128);
  const double d32 = kinetic_drift(s32), d128 = kinetic_drift(s128);

  const auto ref = shoot(b.I0, P0, k, 512);
  auto err = [&](const ShootingState& s) {
    return l2_norm(s.I.back() - ref.I.back()) + l2_norm(s.P.back() - ref.P.back());
  };
  const double e32 = err(s32), e64 = err(shoot(b.I0, P0, k, 64));
  CsvWriter csv(ctx.out / "shooting_order.csv", {"steps", "endpoint_error"});
  csv.row(32, e32);
  csv.row(64, e64);
  const double ratio = e32 / e64;
  const bool pass = d32 < 0.02 && d128 < 0.002 && ratio > 12.0 && ratio < 20.0;
  return {3, "geodesic-conservation", pass,
          "kinetic drift " + percent(d32) + " at T=32 (< 2%), " + percent(d128) + " at T=128 (< 0.2%); error ratio " +
              fmt(ratio) + " on halving dt (16 +- 4)"};
}

/// 4. Shooting adjoint gradient against central differences over P(0).
inline CheckResult check_shooting_gradient(const SuiteContext& ctx) {
  const auto b = blob_pair(16, 3.0, 3.0);
  const Grid& g = b.I0.grid();
  const KernelSpec k(g, ctx.cfg.kernel_sigma);
  const int T = 16;
  const double eps = 1e-4;
  const ScalarField P0 = 50.0 * (b.I1 - b.I0);
  const ScalarField grad = shooting_gradient(b.I0, P0, b.I1, k, T);
  Rng rng = ctx.rng("shooting_gradient");
  CsvWriter csv(ctx.out / "shooting_gradient_check.csv", {"probe", "adjoint", "finite_difference"});
  double ab = 0, aa = 0, bb = 0;
  for (int i = 0; i < 8; ++i) {
    const ScalarField d = noise_field(g, rng);
    ScalarField plus = P0, minus = P0;
    plus.axpy(eps, d);
    minus.axpy(-eps, d);
    const double fd =
        (shooting_data_cost(shoot(b.I0, plus, k, T), b.I1) - shooting_data_cost(shoot(b.I0, minus, k, T), b.I1)) /
        (2 * eps);
    const double an = l2_inner(grad, d);
    csv.row(i, an, fd);
    ab += an * fd;
    aa += an * an;
    bb += fd * fd;
  }
  const double cosine = ab / std::sqrt(aa * bb);
  const double mag = std::abs(std::sqrt(aa) - std::sqrt(bb)) / std::sqrt(bb);
  return {4, "adjoint-gradient", cosine >= 0.999 && mag < 0.01,
          "cosine " + fmt(cosine, 12) + " (>= 0.999), magnitude error " + percent(mag) + " (< 1%), 8 probes"};
}

inline double vec_cosine(const Vec& a, const Vec& b) {
  const double na = a.norm(), nb = b.norm();
  return na > 0.0 && nb > 0.0 ? a.dot(b) / (na * nb) : 0.0;
}

/// 5. Equilibrium-propagation estimator order on the quadratic teacher.
inline CheckResult check_ep_consistency(const SuiteContext& ctx) {
  Rng rng = ctx.rng("ep_teacher");
  const auto m = QuadraticTeacherModel::random(5, 3, rng.next_u64());
  Vec theta(m.dim_theta());
  for (auto& x : theta) x = rng.normal();
  const Vec beta = Vec::Zero(1);
  EpConfig cfg = ctx.cfg.ep();
  cfg.relax_tol = 1e-14;
  const Vec exact = exact_gradient(m, theta, beta, cfg).dC_dtheta;

  CsvWriter one(ctx.out / "ep_teacher.csv", {"xi", "ep_error", "cosine"});
  CsvWriter two(ctx.out / "ep_teacher_symmetric.csv", {"xi", "ep_error", "cosine"});
  std::vector<double> xs, e1, e2;
  for (double xi : {1e-1, 1e-2, 1e-3, 1e-4}) {
    cfg.xi = xi;
    const Vec est = -ep_update(m, theta, beta, cfg).dtheta;
    const Vec sym = -ep_update_symmetric(m, theta, beta, cfg);
    xs.push_back(xi);
    e1.push_back((est - exact).norm() / exact.norm());
    e2.push_back((sym - exact).norm() / exact.norm());
    one.row(xi, e1.back(), vec_cosine(est, exact));
    two.row(xi, e2.back(), vec_cosine(sym, exact));
  }
  const double s1 = loglog_slope(xs, e1), s2 = loglog_slope(xs, e2);
  return {5, "ep-consistency", std::abs(s1 - 1.0) <= 0.15 && std::abs(s2 - 2.0) <= 0.2,
          "one-sided slope " + fmt(s1) + " (1 +- 0.15), symmetric slope " + fmt(s2) + " (2 +- 0.2)"};
}

/// 6. EP estimate of the shooting data gradient against the adjoint one.
inline CheckResult check_shooting_as_ep(const SuiteContext& ctx) {
  const auto b = blob_pair(32, 3.0, 4.0);
  const KernelSpec k(b.I0.grid(), ctx.cfg.kernel_sigma);
  const ScalarField P0 = 20.0 * (b.I1 - b.I0);
  EpConfig cfg = ctx.cfg.ep();
  cfg.relax_tol = 1e-12;
  CsvWriter csv(ctx.out / "ep_shooting.csv", {"xi", "ep_error", "cosine"});
  std::vector<double> xs, err;
  double cos3 = 0.0;
  for (double xi : {1e-2, 1e-3, 1e-4, 1e-5}) {
    const auto rep = shooting_as_ep(b.I0, b.I1, P0, k, ctx.cfg.flow_steps, xi, cfg);
    xs.push_back(xi);
    err.push_back(rep.relative_error);
    csv.row(xi, rep.relative_error, rep.cosine);
    if (xi == 1e-3) {
      cos3 = rep.cosine;
      write_gfld(ctx.out / "ep_shooting_gradient.gfld", rep.ep_gradient);
      write_gfld(ctx.out / "adjoint_shooting_gradient.gfld", rep.adjoint_gradient);
    }
  }
  const double slope = loglog_slope(xs, err);
  return {6, "shooting-as-ep", cos3 >= 0.99 && std::abs(slope - 1.0) <= 0.15,
          "cosine " + fmt(cos3, 6) + " at xi=1e-3 (>= 0.99), error slope " + fmt(slope) +
              " over xi 1e-2..1e-5 (1 +- 0.15)"};
}

/// 7. Scaling-and-squaring exponential: identity, Euler oracle, inverse consistency.
inline CheckResult check_svf(const SuiteContext& ctx) {
  const Grid g(32, 32);
  const bool identity = svf_exp(VectorField(g)).displacement().max_norm() == 0.0;
  Rng rng = ctx.rng("svf");
  CsvWriter csv(ctx.out / "svf_check.csv", {"sample", "squarings", "euler_gap", "inverse_residual"});
  double gap = 0.0, inv = 0.0;
  for (int s = 0; s < 4; ++s) {
    const VectorField v = smooth_field(g, rng, 2.0, 4, 1);
    const Transform e = svf_exp(v, ctx.cfg.squarings());
    const double eg = max_displacement_gap(e, euler_flow(v, 1024));
    const double ir = compose(e, svf_exp(-1.0 * v, ctx.cfg.squarings())).displacement().max_norm();
    gap = std::max(gap, eg);
    inv = std::max(inv, ir);
    csv.row(s, ctx.cfg.squarings().value_or(auto_squarings(v)), eg, ir);
    if (s == 0) write_gfld(ctx.out / "svf_displacement.gfld", e.displacement());
  }
  return {7, "svf", identity && gap < 1e-3 && inv < 0.05,
          std::string("exp(0) ") + (identity ? "exact identity" : "NOT identity") + ", Euler-oracle gap " + fmt(gap) +
              " cells (< 1e-3), inverse residual " + fmt(inv) + " cells (< 0.05)"};
}

/// 8. Bi-invariant (q = 1) geodesics, distance and curvature sign.
inline CheckResult check_unitary_bi_invariant(const SuiteContext& ctx) {
  Rng rng = ctx.rng("unitary_bi_invariant");
  const int T = 64;
  CsvWriter csv(ctx.out / "unitary_geodesics.csv", {"n", "sample", "max_frobenius_error"});
  double worst = 0.0;
  for (int n = 1; n <= 2; ++n) {
    const PenaltyMetric g(n, 1.0, ctx.cfg.unitary_local_weight);
    for (int s = 0; s < 3; ++s) {
      RVec h = random_tangent(g, rng);
      h /= std::sqrt(metric_inner(h, h, g));
      const auto path = euler_arnold_shoot(h, g, T);
      const CMat H = g.algebra().matrix(h);
      double e = 0.0;
      for (int j = 0; j <= T; ++j) e = std::max(e, (path.U[std::size_t(j)] - hamiltonian_exp(H, double(j) / T)).norm());
      worst = std::max(worst, e);
      csv.row(n, s, e);
    }
  }
  DistanceOptions dopt = ctx.cfg.distance();
  dopt.seed = ctx.rng("unitary_distance").next_u64();
  const PenaltyMetric g1(1, 1.0, ctx.cfg.unitary_local_weight);
  const auto d = geodesic_distance({1, pauli_exp(1, "X", std::numbers::pi / 4)}, g1, dopt);
  const double derr = std::abs(d.distance - std::numbers::pi / 4);
  const auto& c = ctx.census(2, 1.0);
  const bool pass = worst < 1e-6 && d.found && derr <= 1e-3 && c.min >= -kCurvatureFloor;
  return {8, "unitary-bi-invariant", pass,
          "geodesic vs exp " + fmt(worst) + " (< 1e-6), distance error " + fmt(derr) +
              " (<= 1e-3), min sampled curvature " + fmt(c.min) + " (>= -1e-10)"};
}

/// 9. Curvature census: negative planes appear under the penalty.
inline CheckResult check_curvature_census(const SuiteContext& ctx) {
  const auto& c1 = ctx.census(2, 1.0);
  const auto& c64 = ctx.census(2, 64.0);
  const auto& d1 = ctx.census(3, 1.0);
  const auto& d64 = ctx.census(3, 64.0);
  const bool pass = c64.fraction_negative > c1.fraction_negative && c1.fraction_negative == 0.0;
  return {9, "curvature-census", pass,
          "n=2 negative fraction q=1 " + percent(c1.fraction_negative) + ", q=64 " + percent(c64.fraction_negative) +
              " (need q=64 > q=1 = 0); n=3 q=1 " + percent(d1.fraction_negative) + ", q=64 " +
              percent(d64.fraction_negative) + "; " + std::to_string(c1.curvature.size()) + " planes each"};
}

// ---------------------------------------------------------------------------
// Suites

using CheckFn = CheckResult (*)(const SuiteContext&);

struct SuiteEntry {
  int id;
  const char* suite;
  CheckFn run;
};

inline const std::vector<SuiteEntry>& suite_entries() {
  static const std::vector<SuiteEntry> entries{
      {1, "lddmm", check_lddmm_gradient},        {2, "lddmm", check_lddmm_registration},
      {3, "shooting", check_shooting_conservation}, {4, "shooting", check_shooting_gradient},
      {5, "ep", check_ep_consistency},           {6, "ep", check_shooting_as_ep},
      {7, "svf", check_svf},                     {8, "unitary", check_unitary_bi_invariant},
      {9, "unitary", check_curvature_census},
  };
  return entries;
}

inline const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"lddmm", "shooting", "svf", "ep", "unitary", "all"};
  return names;
}

inline std::vector<SuiteEntry> entries_for(const std::string& name) {
  if (std::find(suite_names().begin(), suite_names().end(), name) == suite_names().end())
    throw DomainError("unknown suite '" + name + "'");
  std::vector<SuiteEntry> out;
  for (const auto& e : suite_entries())
    if (name == "all" || name == e.suite) out.push_back(e);
  return out;
}

struct SuiteReport {
  int exit_code = 0;  ///< 0 all checks pass, 1 a check failed or raised, 2 input error
  std::vector<CheckResult> checks;
  std::string error;  ///< input error message when exit_code == 2
};

/// Runs the named suite into ctx.out and writes `manifest.txt` there.
/// Progress lines go to `log`; the manifest holds no timings.
inline SuiteReport run_suite(const std::string& name, const SuiteContext& ctx, std::ostream& log) {
  SuiteReport rep;
  fs::create_directories(ctx.out);
  std::ostringstream manifest;
  manifest << "# geoflow suite manifest\n"
           << "suite " << name << "\n"
           << "seed " << ctx.cfg.seed << "\n"
           << version_lines() << "input i0 " << (ctx.i0 ? ctx.i0->string() : "synthetic") << "\n"
           << "input i1 " << (ctx.i1 ? ctx.i1->string() : "synthetic") << "\n";

  auto finish = [&] {
    auto out = detail::open_out(ctx.out / "manifest.txt");
    out << manifest.str();
    if (!out) throw IoError("write failed for '" + (ctx.out / "manifest.txt").string() + "'");
    return rep;
  };

  std::vector<SuiteEntry> entries;
  try {
    entries = entries_for(name);
    if (ctx.i0.has_value() != ctx.i1.has_value()) throw DomainError("--i0 and --i1 must be given together");
    for (const auto* p : {&ctx.i0, &ctx.i1})
      if (*p && !fs::is_regular_file(**p)) throw IoError("missing input file '" + (*p)->string() + "'");
  } catch (const Error& e) {
    rep.exit_code = 2;
    rep.error = e.what();
    manifest << "error " << rep.error << "\nresult ERROR\n";
    return finish();
  }

  manifest << "\n[config]\n" << render_config(ctx.cfg) << "\n[checks]\n";
  bool all = true;
  for (const auto& e : entries) {
    CheckResult r;
    try {
      r = e.run(ctx);
    } catch (const std::exception& ex) {
      r = {e.id, "check-" + std::to_string(e.id), false, std::string("error: ") + ex.what()};
    }
    all = all && r.pass;
    const std::string line = std::string(r.pass ? "PASS" : "FAIL") + " " + std::to_string(r.id) + " " + r.name + ": " +
                             r.measured;
    manifest << line << "\n";
    log << line << std::endl;
    rep.checks.push_back(std::move(r));
  }
  rep.exit_code = all ? 0 : 1;
  manifest << "\nresult " << (all ? "PASS" : "FAIL") << "\n";
  return finish();
}

}  // namespace geoflow
