#pragma once

// Experiment configuration: line-based `key = value` text with `#` comments
// and optional `[section]` headers that prefix the keys below them.
// Every key has a default and a documented range; render() emits the
// canonical form, so render(parse(render(parse(x)))) == render(parse(x)).

#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ep.hpp"
#include "errors.hpp"
#include "optimize.hpp"
#include "unitary.hpp"

namespace geoflow {

/// Malformed configuration; `line()` is 0 when no source line applies.
class ConfigError : public DomainError {
public:
  ConfigError(const std::string& what, int line)
      : DomainError(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  int line() const noexcept { return line_; }

private:
  int line_;
};

struct ExperimentConfig {
  double kernel_sigma = 2.0;
  int flow_steps = 16;
  int svf_squarings = 0;  ///< 0 selects the count automatically
  double match_weight = 100.0;  ///< data weight; LDDMM sigma = 1 / sqrt(weight)

  double opt_initial_step = 1.0;
  double opt_shrink = 0.5;
  double opt_armijo = 1e-4;
  double opt_tol = 1e-6;
  int opt_max_iters = 500;
  double opt_min_step = 1e-12;
  double opt_max_step = 1e3;

  double ep_xi = 1e-3;
  double ep_relax_tol = 1e-8;
  int ep_relax_max_iters = 200000;
  double ep_relax_step = 0.1;

  double unitary_q = 100.0;
  int unitary_local_weight = 2;
  int unitary_steps = 64;
  int unitary_restarts = 4;
  double unitary_tol = 1e-3;
  int unitary_samples = 500;

  std::uint64_t seed = 0;

  double lddmm_sigma() const { return 1.0 / std::sqrt(match_weight); }
  std::optional<int> squarings() const {
    return svf_squarings == 0 ? std::nullopt : std::optional<int>(svf_squarings);
  }
  DescentOptions descent() const {
    return {opt_initial_step, opt_shrink, opt_armijo, opt_tol, opt_max_iters, opt_min_step, opt_max_step};
  }
  EpConfig ep() const {
    EpConfig c;
    c.xi = ep_xi;
    c.relax_tol = ep_relax_tol;
    c.relax_max_iters = ep_relax_max_iters;
    c.relax_step = ep_relax_step;
    return c;
  }
  DistanceOptions distance() const {
    DistanceOptions d;
    d.restarts = unitary_restarts;
    d.steps = unitary_steps;
    d.tol = unitary_tol;
    d.seed = seed;
    return d;
  }
};

namespace detail {

struct RealRange {
  double lo, hi;
  bool lo_open;
};

struct IntRange {
  long long lo, hi;
};

struct ConfigKey {
  const char* name;
  std::variant<double ExperimentConfig::*, int ExperimentConfig::*, std::uint64_t ExperimentConfig::*> field;
  std::variant<RealRange, IntRange> range;
  const char* doc;
};

inline constexpr double kInf = std::numeric_limits<double>::infinity();

inline const std::vector<ConfigKey>& config_keys() {
  using C = ExperimentConfig;
  static const std::vector<ConfigKey> keys{
      {"kernel.sigma", &C::kernel_sigma, RealRange{0, kInf, true}, "Gaussian kernel width in cells, > 0"},
      {"flow.steps", &C::flow_steps, IntRange{2, 4096}, "time steps T, 2..4096"},
      {"svf.squarings", &C::svf_squarings, IntRange{0, 30}, "scaling-and-squaring count, 0 = automatic"},
      {"match.weight", &C::match_weight, RealRange{0, kInf, true}, "data-term weight (1 / sigma^2), > 0"},
      {"optimizer.initial_step", &C::opt_initial_step, RealRange{0, kInf, true}, "first trial step, > 0"},
      {"optimizer.shrink", &C::opt_shrink, RealRange{0, 1, true}, "backtracking factor, (0, 1)"},
      {"optimizer.armijo", &C::opt_armijo, RealRange{0, 1, true}, "sufficient-decrease constant, (0, 1)"},
      {"optimizer.tol", &C::opt_tol, RealRange{0, 1, false}, "relative energy change to stop, [0, 1)"},
      {"optimizer.max_iters", &C::opt_max_iters, IntRange{0, 1000000}, "iteration budget"},
      {"optimizer.min_step", &C::opt_min_step, RealRange{0, kInf, true}, "smallest trial step, > 0"},
      {"optimizer.max_step", &C::opt_max_step, RealRange{0, kInf, true}, "largest trial step, > 0"},
      {"ep.xi", &C::ep_xi, RealRange{0, 1, true}, "nudging amplitude, (0, 1)"},
      {"ep.relax_tol", &C::ep_relax_tol, RealRange{0, 1, true}, "fixed-point residual tolerance, (0, 1)"},
      {"ep.relax_max_iters", &C::ep_relax_max_iters, IntRange{1, 100000000}, "relaxation budget"},
      {"ep.relax_step", &C::ep_relax_step, RealRange{0, 1, true}, "gradient-flow step, (0, 1)"},
      {"unitary.q", &C::unitary_q, RealRange{1, kInf, false}, "penalty on non-local directions, >= 1"},
      {"unitary.local_weight", &C::unitary_local_weight, IntRange{1, 3}, "largest unpenalized Pauli weight, 1..3"},
      {"unitary.steps", &C::unitary_steps, IntRange{1, 100000}, "geodesic time steps"},
      {"unitary.restarts", &C::unitary_restarts, IntRange{1, 1000}, "distance restarts"},
      {"unitary.tol", &C::unitary_tol, RealRange{0, 1, true}, "endpoint gap accepted as a hit, (0, 1)"},
      {"unitary.samples", &C::unitary_samples, IntRange{100, 10000000}, "curvature census size, >= 100"},
      {"seed", &C::seed, IntRange{0, 0}, "random seed, any unsigned 64-bit value"},
  };
  return keys;
}

inline const ConfigKey* find_key(std::string_view name) {
  for (const auto& k : config_keys())
    if (name == k.name) return &k;
  return nullptr;
}

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// Shortest decimal text that reads back to the same double.
inline std::string format_real(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline void assign(ExperimentConfig& c, const ConfigKey& key, std::string_view text, int line) {
  const std::string name = key.name;
  const auto bad = [&](const std::string& why) { return ConfigError(name + ": " + why, line); };
  const char* b = text.data();
  const char* e = b + text.size();
  if (std::holds_alternative<double ExperimentConfig::*>(key.field)) {
    double v = 0.0;
    const auto r = std::from_chars(b, e, v);
    if (r.ec != std::errc() || r.ptr != e) throw bad("malformed number '" + std::string(text) + "'");
    if (!std::isfinite(v)) throw bad("value must be finite");
    const auto& rg = std::get<RealRange>(key.range);
    const bool lo_ok = rg.lo_open ? v > rg.lo : v >= rg.lo;
    if (!lo_ok || !(v < rg.hi)) throw bad("out of range (" + std::string(key.doc) + "), got " + std::string(text));
    c.*std::get<double ExperimentConfig::*>(key.field) = v;
  } else if (std::holds_alternative<int ExperimentConfig::*>(key.field)) {
    long long v = 0;
    const auto r = std::from_chars(b, e, v);
    if (r.ec != std::errc() || r.ptr != e) throw bad("malformed integer '" + std::string(text) + "'");
    const auto& rg = std::get<IntRange>(key.range);
    if (v < rg.lo || v > rg.hi) throw bad("out of range (" + std::string(key.doc) + "), got " + std::string(text));
    c.*std::get<int ExperimentConfig::*>(key.field) = int(v);
  } else {
    std::uint64_t v = 0;
    const auto r = std::from_chars(b, e, v);
    if (r.ec != std::errc() || r.ptr != e) throw bad("malformed unsigned integer '" + std::string(text) + "'");
    c.*std::get<std::uint64_t ExperimentConfig::*>(key.field) = v;
  }
}

inline std::string value_text(const ExperimentConfig& c, const ConfigKey& key) {
  if (auto p = std::get_if<double ExperimentConfig::*>(&key.field)) return format_real(c.**p);
  if (auto p = std::get_if<int ExperimentConfig::*>(&key.field)) return std::to_string(c.**p);
  return std::to_string(c.*std::get<std::uint64_t ExperimentConfig::*>(key.field));
}

}  // namespace detail

/// Validates and applies one `key = value` assignment (command-line overrides).
inline void set_config_value(ExperimentConfig& c, std::string_view key, std::string_view value, int line = 0) {
  const auto* k = detail::find_key(detail::trim(key));
  if (!k) throw ConfigError("unknown key '" + std::string(detail::trim(key)) + "'", line);
  detail::assign(c, *k, detail::trim(value), line);
}

inline ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig c;
  std::map<std::string, int> seen;
  std::string section;
  int lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++lineno;
    if (const auto h = line.find('#'); h != std::string_view::npos) line = line.substr(0, h);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("malformed section header", lineno);
      section = std::string(detail::trim(line.substr(1, line.size() - 2)));
      if (section.empty() || section.find_first_of(" \t=") != std::string::npos)
        throw ConfigError("malformed section header", lineno);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError("expected 'key = value'", lineno);
    const std::string local(detail::trim(line.substr(0, eq)));
    if (local.empty()) throw ConfigError("missing key before '='", lineno);
    const std::string key = section.empty() ? local : section + "." + local;
    const auto* spec = detail::find_key(key);
    if (!spec) throw ConfigError("unknown key '" + key + "'", lineno);
    if (auto it = seen.find(key); it != seen.end())
      throw ConfigError("duplicate key '" + key + "' on lines " + std::to_string(it->second) + " and " +
                            std::to_string(lineno),
                        lineno);
    seen.emplace(key, lineno);
    detail::assign(c, *spec, detail::trim(line.substr(eq + 1)), lineno);
  }
  return c;
}

/// Canonical text: top-level keys first, then one section per prefix in table order.
inline std::string render_config(const ExperimentConfig& c) {
  std::ostringstream out;
  std::string current;
  for (const auto& k : detail::config_keys()) {
    const std::string_view name = k.name;
    const auto dot = name.find('.');
    if (dot == std::string_view::npos) out << name << " = " << detail::value_text(c, k) << "\n";
  }
  for (const auto& k : detail::config_keys()) {
    const std::string_view name = k.name;
    const auto dot = name.find('.');
    if (dot == std::string_view::npos) continue;
    const std::string sec(name.substr(0, dot));
    if (sec != current) {
      out << "\n[" << sec << "]\n";
      current = sec;
    }
    out << name.substr(dot + 1) << " = " << detail::value_text(c, k) << "\n";
  }
  return out.str();
}

}  // namespace geoflow
