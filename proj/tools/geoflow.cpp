// geoflow command-line front end.
//
// Exit status: 0 success; 1 a suite check failed, a distance search found no
// geodesic, or a numerical routine failed; 2 bad usage, configuration or input.

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "geoflow/suite.hpp"

namespace {

using namespace geoflow;

/// Options shared by every leaf command.
struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::string out;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "configuration file (key = value lines)");
    app->add_option("--set", sets, "override one configuration key, e.g. --set kernel.sigma=1.5")
        ->type_name("KEY=VALUE");
    app->add_option("--out", out, "artifact directory (default: $GEOFLOW_OUT, else ./geoflow-out)");
  }

  ExperimentConfig load() const {
    ExperimentConfig cfg;
    if (!config.empty()) {
      std::ifstream in(config);
      if (!in) throw IoError("cannot open config file '" + config + "'");
      std::stringstream ss;
      ss << in.rdbuf();
      cfg = parse_config(ss.str());
    }
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects KEY=VALUE, got '" + s + "'", 0);
      set_config_value(cfg, s.substr(0, eq), s.substr(eq + 1));
    }
    return cfg;
  }

  fs::path out_dir() const {
    fs::path dir = "geoflow-out";
    if (!out.empty()) dir = out;
    else if (const char* env = std::getenv("GEOFLOW_OUT"); env && *env) dir = env;
    fs::create_directories(dir);
    return dir;
  }
};

template <class T>
void override_key(ExperimentConfig& cfg, const char* key, const T& value) {
  if constexpr (std::is_floating_point_v<T>) set_config_value(cfg, key, detail::format_real(value));
  else set_config_value(cfg, key, std::to_string(value));
}

int register_command(const std::string& kind, const Common& c, const std::string& i0_path, const std::string& i1_path) {
  const ExperimentConfig cfg = c.load();
  const ScalarField I0 = read_pgm(i0_path), I1 = read_pgm(i1_path);
  require_same_grid(I0.grid(), I1.grid(), "register inputs");
  const fs::path out = c.out_dir();
  const KernelSpec k(I0.grid(), cfg.kernel_sigma);

  if (kind == "shooting") {
    const auto m = match_by_shooting(I0, I1, k, cfg.match_weight, cfg.flow_steps, cfg.descent());
    const auto flow = shooting_flow(m.state);
    const Transform g = integrate_flow_steps(flow, flow.steps(), 0);
    write_trace_csv(out / "shooting_trace.csv", m.trace);
    write_pgm(out / "shooting_warped.pgm", warp(I0, g));
    write_gfld(out / "shooting_displacement.gfld", g.displacement());
    write_kinetic_csv(out / "shooting_kinetic.csv", m.state);
    std::cout << "shooting: " << m.iterations << " iterations, energy " << fmt(m.trace.back().energy, 6)
              << " (data " << fmt(m.trace.back().data, 6) << "), kinetic drift " << percent(kinetic_drift(m.state))
              << "\n";
    return 0;
  }

  const LddmmProblem p(I0, I1, k, cfg.lddmm_sigma(), cfg.flow_steps);
  if (kind == "svf") {
    const auto r = register_svf(p, cfg.descent(), cfg.squarings());
    write_trace_csv(out / "svf_trace.csv", r.trace);
    write_pgm(out / "svf_warped.pgm", warp(I0, r.g_exp));
    write_gfld(out / "svf_displacement.gfld", r.g_exp.displacement());
    write_gfld(out / "svf_velocity.gfld", r.v);
    std::cout << "svf: " << r.iterations << " iterations, energy " << fmt(r.trace.back().energy, 6) << " (data "
              << fmt(r.trace.back().data, 6) << "), exp vs stepped flow gap " << fmt(r.exp_gap) << " cells\n";
    return 0;
  }

  const auto r = register_lddmm(p, cfg.descent());
  write_trace_csv(out / "lddmm_trace.csv", r.trace);
  write_pgm(out / "lddmm_warped.pgm", warp(I0, r.g));
  write_gfld(out / "lddmm_displacement.gfld", r.g.displacement());
  std::cout << "lddmm: " << r.iterations << " iterations, energy " << fmt(r.trace.back().energy, 6) << " (data "
            << fmt(r.trace.back().data, 6) << "), min Jacobian " << fmt(r.diagnostics.min_jacdet) << "\n";
  return 0;
}

int ep_demo(const std::string& model, std::vector<double> xis, const Common& c) {
  const ExperimentConfig cfg = c.load();
  if (xis.empty()) xis.push_back(cfg.ep_xi);
  const fs::path out = c.out_dir();
  CsvWriter csv(out / ("ep_" + model + ".csv"), {"xi", "ep_error", "cosine"});
  std::cout << "xi,ep_error,cosine\n";
  auto emit = [&](double xi, double err, double cosine) {
    csv.row(xi, err, cosine);
    std::cout << detail::format_real(xi) << "," << detail::format_real(err) << "," << detail::format_real(cosine)
              << "\n";
  };

  EpConfig ep = cfg.ep();
  if (model == "shooting") {
    const auto b = blob_pair(16, 3.0, 3.0);
    const KernelSpec k(b.I0.grid(), cfg.kernel_sigma);
    const ScalarField P0 = 20.0 * (b.I1 - b.I0);
    for (double xi : xis) {
      const auto rep = shooting_as_ep(b.I0, b.I1, P0, k, cfg.flow_steps, xi, ep);
      emit(xi, rep.relative_error, rep.cosine);
    }
    return 0;
  }

  auto run = [&](const EnergyModel& m, const Vec& theta, const Vec& beta, const Vec& exact) {
    for (double xi : xis) {
      ep.xi = xi;
      const Vec est = -ep_update(m, theta, beta, ep).dtheta;
      emit(xi, (est - exact).norm() / exact.norm(), vec_cosine(est, exact));
    }
  };
  if (model == "scalar") {
    const ScalarToyModel m(0.7);
    run(m, Vec::Constant(1, 0.3), Vec::Constant(1, 0.4), Vec::Constant(1, m.closed_form_gradient(0.3, 0.4, 1.0)));
  } else {
    Rng rng = Rng(cfg.seed).split("ep_teacher");
    const auto m = QuadraticTeacherModel::random(5, 3, rng.next_u64());
    Vec theta(m.dim_theta());
    for (auto& x : theta) x = rng.normal();
    const Vec beta = Vec::Zero(1);
    run(m, theta, beta, exact_gradient(m, theta, beta, ep).dC_dtheta);
  }
  return 0;
}

int unitary_distance(ExperimentConfig cfg, int n, const std::string& target_spec, const Common& c) {
  const PenaltyMetric g(n, cfg.unitary_q, cfg.unitary_local_weight);
  const UnitaryPoint target = parse_target(target_spec, n);
  const auto r = geodesic_distance(target, g, cfg.distance());
  CsvWriter csv(c.out_dir() / "unitary_distance.csv", {"run", "length", "gap"});
  for (std::size_t i = 0; i < r.run_length.size(); ++i) csv.row(i, r.run_length[i], r.run_gap[i]);
  std::cout << "found " << (r.found ? "yes" : "no") << "\ndistance " << detail::format_real(r.distance) << "\ngap "
            << detail::format_real(r.gap) << "\n";
  return r.found ? 0 : 1;
}

int unitary_curvature(const ExperimentConfig& cfg, int n, const Common& c) {
  const PenaltyMetric g(n, cfg.unitary_q, cfg.unitary_local_weight);
  const auto census = curvature_census(g, cfg.unitary_samples, cfg.seed);
  write_curvature_csv(c.out_dir() / "curvature.csv", census);
  std::cout << "planes " << census.curvature.size() << "\nfraction_negative "
            << detail::format_real(census.fraction_negative) << "\nmin " << detail::format_real(census.min)
            << "\nmax " << detail::format_real(census.max) << "\nmean " << detail::format_real(census.mean)
            << "\nmedian " << detail::format_real(census.median) << "\n";
  return 0;
}

int suite_command(const std::string& name, std::optional<std::uint64_t> seed, const std::string& i0,
                  const std::string& i1, const Common& c) {
  SuiteContext ctx;
  ctx.cfg = c.load();
  if (seed) ctx.cfg.seed = *seed;
  ctx.out = c.out_dir();
  if (!i0.empty()) ctx.i0 = i0;
  if (!i1.empty()) ctx.i1 = i1;
  const auto rep = run_suite(name, ctx, std::cout);
  if (rep.exit_code == 2) std::cerr << "geoflow: " << rep.error << "\n";
  std::cout << "manifest " << (ctx.out / "manifest.txt").string() << "\n";
  return rep.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"geoflow: diffeomorphic matching, equilibrium propagation and unitary geometry experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(geoflow::kVersion));

  // register
  auto* reg = app.add_subcommand("register", "register two PGM images");
  reg->require_subcommand(1);
  struct RegisterArgs {
    Common common;
    std::string i0, i1;
  };
  std::vector<std::pair<std::string, RegisterArgs>> reg_args{{"lddmm", {}}, {"shooting", {}}, {"svf", {}}};
  for (auto& [kind, a] : reg_args) {
    auto* sub = reg->add_subcommand(kind, kind == "lddmm"      ? "time-varying velocity matching"
                                          : kind == "shooting" ? "geodesic shooting over the initial momentum"
                                                               : "stationary velocity matching");
    sub->add_option("--i0", a.i0, "template image (PGM)")->required();
    sub->add_option("--i1", a.i1, "target image (PGM)")->required();
    a.common.attach(sub);
  }

  // ep demo
  auto* ep = app.add_subcommand("ep", "equilibrium propagation");
  ep->require_subcommand(1);
  auto* demo = ep->add_subcommand("demo", "EP estimate against the exact gradient");
  Common demo_common;
  std::string model = "quadratic";
  std::vector<double> xis;
  demo->add_option("--model", model, "scalar, quadratic or shooting")
      ->check(CLI::IsMember({"scalar", "quadratic", "shooting"}));
  demo->add_option("--xi", xis, "nudging amplitude (repeatable; default ep.xi)");
  demo_common.attach(demo);

  // unitary distance | curvature
  auto* uni = app.add_subcommand("unitary", "penalty-metric geometry of U(2^n)");
  uni->require_subcommand(1);
  auto* dist = uni->add_subcommand("distance", "shortest geodesic from the identity to a target");
  auto* curv = uni->add_subcommand("curvature", "sectional curvature census");
  Common dist_common, curv_common;
  int dist_n = 1, curv_n = 2;
  std::optional<double> dist_q, curv_q;
  std::optional<int> dist_lw, curv_lw, samples;
  std::optional<std::uint64_t> curv_seed;
  std::string target;
  dist->add_option("--n", dist_n, "qubits")->check(CLI::Range(1, 3))->required();
  dist->add_option("--q", dist_q, "penalty factor (default unitary.q)");
  dist->add_option("--local-weight", dist_lw, "largest unpenalized Pauli weight (default unitary.local_weight)");
  dist->add_option("--target", target, "exp:<pauli-string>:<angle> or a matrix file")->required();
  dist_common.attach(dist);
  curv->add_option("--n", curv_n, "qubits")->check(CLI::Range(1, 3))->required();
  curv->add_option("--q", curv_q, "penalty factor (default unitary.q)");
  curv->add_option("--local-weight", curv_lw, "largest unpenalized Pauli weight (default unitary.local_weight)");
  curv->add_option("--samples", samples, "number of planes (default unitary.samples)");
  curv->add_option("--seed", curv_seed, "random seed (default seed)");
  curv_common.attach(curv);

  // suite
  auto* suite = app.add_subcommand("suite", "run an experiment suite and write a manifest");
  Common suite_common;
  std::string suite_name;
  std::optional<std::uint64_t> suite_seed;
  std::string suite_i0, suite_i1;
  suite->add_option("name", suite_name, "lddmm, shooting, svf, ep, unitary or all")->required();
  suite->add_option("--seed", suite_seed, "random seed (default seed)");
  suite->add_option("--i0", suite_i0, "template PGM for the registration check");
  suite->add_option("--i1", suite_i1, "target PGM for the registration check");
  suite_common.attach(suite);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    for (auto& [kind, a] : reg_args)
      if (reg->got_subcommand(kind)) return register_command(kind, a.common, a.i0, a.i1);
    if (demo->parsed()) return ep_demo(model, xis, demo_common);
    if (dist->parsed()) {
      auto cfg = dist_common.load();
      if (dist_q) override_key(cfg, "unitary.q", *dist_q);
      if (dist_lw) override_key(cfg, "unitary.local_weight", *dist_lw);
      return unitary_distance(cfg, dist_n, target, dist_common);
    }
    if (curv->parsed()) {
      auto cfg = curv_common.load();
      if (curv_q) override_key(cfg, "unitary.q", *curv_q);
      if (curv_lw) override_key(cfg, "unitary.local_weight", *curv_lw);
      if (samples) override_key(cfg, "unitary.samples", *samples);
      if (curv_seed) cfg.seed = *curv_seed;
      return unitary_curvature(cfg, curv_n, curv_common);
    }
    if (suite->parsed()) return suite_command(suite_name, suite_seed, suite_i0, suite_i1, suite_common);
  } catch (const IoError& e) {
    std::cerr << "geoflow: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "geoflow: config: " << e.what() << "\n";
    return 2;
  } catch (const DomainError& e) {
    std::cerr << "geoflow: " << e.what() << "\n";
    return 2;
  } catch (const GridMismatch& e) {
    std::cerr << "geoflow: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "geoflow: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
