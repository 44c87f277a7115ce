#pragma once

// Sectioned key = value scenario files:
//
//   [scenario]
//   mpr = 0.1
//   lead_profile = 0:21 100:21 120:18 140:18 160:21
//   [controller]
//   kind = ts-ops
//
// Every key has a parser and a printer so a loaded configuration can be
// dumped and re-read without loss. Optional values use the literal "auto".

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tsops/errors.hpp"
#include "tsops/metrics.hpp"
#include "tsops/optimizer.hpp"
#include "tsops/simulator.hpp"

namespace tsops {

struct ProjectConfig {
  Scenario scenario;
  OptimizerConfig optimizer;
  // "builtin" or a path to a coefficient file.
  std::string fuel_table = "builtin";

  bool operator==(const ProjectConfig&) const = default;
};

namespace config_detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) {
    auto t = trim(cur);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

inline double to_double(const std::string& s) {
  const auto t = trim(s);
  if (t.empty()) throw std::invalid_argument("empty number");
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size() || errno == ERANGE || !std::isfinite(v)) {
    throw std::invalid_argument("not a number: '" + t + "'");
  }
  return v;
}

inline std::size_t to_size(const std::string& s) {
  const auto t = trim(s);
  if (t.empty() || t.find_first_not_of("0123456789") != std::string::npos) {
    throw std::invalid_argument("not a non-negative integer: '" + t + "'");
  }
  return static_cast<std::size_t>(std::stoull(t));
}

inline bool to_bool(const std::string& s) {
  const auto t = trim(s);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw std::invalid_argument("not a boolean: '" + t + "'");
}

// Shortest text that parses back to exactly v.
inline std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::optional<double> to_opt_double(const std::string& s) {
  if (trim(s) == "auto") return std::nullopt;
  return to_double(s);
}

inline std::string fmt_opt(const std::optional<double>& v) {
  return v ? fmt(*v) : "auto";
}

inline LeadProfile to_profile(const std::string& s) {
  LeadProfile p;
  for (const auto& tok : split(s, ' ')) {
    const auto colon = tok.find(':');
    if (colon == std::string::npos) {
      throw std::invalid_argument("lead knot '" + tok + "' is not t:v");
    }
    p.knots.push_back(
        {to_double(tok.substr(0, colon)), to_double(tok.substr(colon + 1))});
  }
  if (p.knots.empty()) throw std::invalid_argument("lead profile is empty");
  return p;
}

inline std::string fmt_profile(const LeadProfile& p) {
  std::string out;
  for (const auto& k : p.knots) {
    if (!out.empty()) out += ' ';
    out += fmt(k.t) + ":" + fmt(k.v);
  }
  return out;
}

inline std::vector<double> to_list(const std::string& s) {
  std::vector<double> out;
  if (trim(s) == "auto") return out;
  for (const auto& tok : split(s, ',')) out.push_back(to_double(tok));
  return out;
}

inline std::string fmt_list(const std::vector<double>& v) {
  if (v.empty()) return "auto";
  std::string out;
  for (double x : v) {
    if (!out.empty()) out += ",";
    out += fmt(x);
  }
  return out;
}

inline std::map<std::size_t, ControllerParams> to_per_vehicle(
    const std::string& s) {
  std::map<std::size_t, ControllerParams> out;
  if (trim(s) == "none") return out;
  for (const auto& tok : split(s, ',')) {
    const auto parts = split(tok, ':');
    if (parts.size() != 3) {
      throw std::invalid_argument("per-vehicle entry '" + tok +
                                  "' is not vehicle:beta:gamma");
    }
    out[to_size(parts[0])] = {to_double(parts[1]), to_double(parts[2])};
  }
  return out;
}

inline std::string fmt_per_vehicle(
    const std::map<std::size_t, ControllerParams>& m) {
  if (m.empty()) return "none";
  std::string out;
  for (const auto& [i, th] : m) {
    if (!out.empty()) out += ",";
    out += std::to_string(i) + ":" + fmt(th.beta) + ":" + fmt(th.gamma);
  }
  return out;
}

struct Key {
  std::string section;
  std::string name;
  std::function<void(ProjectConfig&, const std::string&)> set;
  std::function<std::string(const ProjectConfig&)> get;
};

#define TSOPS_DOUBLE_KEY(sec, key, member)                                   \
  Key {                                                                      \
    sec, key,                                                                \
        [](ProjectConfig& c, const std::string& v) { c.member = to_double(v); }, \
        [](const ProjectConfig& c) { return fmt(c.member); }                 \
  }

#define TSOPS_OPT_KEY(sec, key, member)                                      \
  Key {                                                                      \
    sec, key,                                                                \
        [](ProjectConfig& c, const std::string& v) {                         \
          c.member = to_opt_double(v);                                       \
        },                                                                   \
        [](const ProjectConfig& c) { return fmt_opt(c.member); }             \
  }

inline const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      {"scenario", "name",
       [](ProjectConfig& c, const std::string& v) { c.scenario.name = trim(v); },
       [](const ProjectConfig& c) { return c.scenario.name; }},
      {"scenario", "n_followers",
       [](ProjectConfig& c, const std::string& v) {
         c.scenario.n_followers = to_size(v);
       },
       [](const ProjectConfig& c) {
         return std::to_string(c.scenario.n_followers);
       }},
      TSOPS_DOUBLE_KEY("scenario", "mpr", scenario.mpr),
      TSOPS_DOUBLE_KEY("scenario", "t_f", scenario.t_f),
      TSOPS_DOUBLE_KEY("scenario", "dt", scenario.dt),
      {"scenario", "integrator",
       [](ProjectConfig& c, const std::string& v) {
         auto m = parse_integrator(trim(v));
         if (!m) throw std::invalid_argument("expected rk4 or euler");
         c.scenario.integrator = *m;
       },
       [](const ProjectConfig& c) {
         return std::string(to_string(c.scenario.integrator));
       }},
      {"scenario", "lead_profile",
       [](ProjectConfig& c, const std::string& v) {
         c.scenario.lead = to_profile(v);
       },
       [](const ProjectConfig& c) { return fmt_profile(c.scenario.lead); }},
      TSOPS_OPT_KEY("scenario", "min_safe_spacing", scenario.min_safe_spacing),
      {"scenario", "initial_spacing",
       [](ProjectConfig& c, const std::string& v) {
         c.scenario.initial_spacing = to_list(v);
       },
       [](const ProjectConfig& c) {
         return fmt_list(c.scenario.initial_spacing);
       }},

      TSOPS_DOUBLE_KEY("hv_model", "a", scenario.hv_model.a),
      TSOPS_DOUBLE_KEY("hv_model", "b", scenario.hv_model.b),
      TSOPS_DOUBLE_KEY("hv_model", "v0", scenario.hv_model.v0),
      TSOPS_DOUBLE_KEY("hv_model", "s0", scenario.hv_model.s0),
      TSOPS_DOUBLE_KEY("hv_model", "T", scenario.hv_model.T),
      TSOPS_DOUBLE_KEY("hv_model", "delta", scenario.hv_model.delta),
      TSOPS_DOUBLE_KEY("hv_model", "length", scenario.hv_model.length),

      TSOPS_DOUBLE_KEY("av_model", "k1", scenario.av_model.k1),
      TSOPS_DOUBLE_KEY("av_model", "k2", scenario.av_model.k2),
      TSOPS_DOUBLE_KEY("av_model", "eta", scenario.av_model.eta),
      TSOPS_DOUBLE_KEY("av_model", "tau", scenario.av_model.tau),
      TSOPS_DOUBLE_KEY("av_model", "length", scenario.av_model.length),

      {"controller", "kind",
       [](ProjectConfig& c, const std::string& v) {
         auto k = parse_controller_kind(trim(v));
         if (!k) throw std::invalid_argument("expected ts-ops, ts-trc or none");
         c.scenario.controller.kind = *k;
       },
       [](const ProjectConfig& c) {
         return std::string(to_string(c.scenario.controller.kind));
       }},
      {"controller", "law",
       [](ProjectConfig& c, const std::string& v) {
         auto k = parse_sigmoid(trim(v));
         if (!k) throw std::invalid_argument("expected arctan, tanh or erf");
         c.scenario.controller.law = *k;
       },
       [](const ProjectConfig& c) {
         return std::string(to_string(c.scenario.controller.law));
       }},
      TSOPS_DOUBLE_KEY("controller", "beta", scenario.controller.theta.beta),
      TSOPS_DOUBLE_KEY("controller", "gamma", scenario.controller.theta.gamma),
      {"controller", "per_vehicle",
       [](ProjectConfig& c, const std::string& v) {
         c.scenario.controller.per_vehicle = to_per_vehicle(v);
       },
       [](const ProjectConfig& c) {
         return fmt_per_vehicle(c.scenario.controller.per_vehicle);
       }},
      TSOPS_OPT_KEY("controller", "beta_bound_spacing",
                    scenario.controller.beta_bound_spacing),
      TSOPS_DOUBLE_KEY("controller", "phi1", scenario.controller.trc.phi1),
      TSOPS_DOUBLE_KEY("controller", "phi2", scenario.controller.trc.phi2),
      TSOPS_DOUBLE_KEY("controller", "phi3", scenario.controller.trc.phi3),
      TSOPS_OPT_KEY("controller", "v_star", scenario.controller.v_star),

      TSOPS_DOUBLE_KEY("optimizer", "beta0", optimizer.theta0.beta),
      TSOPS_DOUBLE_KEY("optimizer", "gamma0", optimizer.theta0.gamma),
      TSOPS_DOUBLE_KEY("optimizer", "epsilon", optimizer.epsilon),
      TSOPS_DOUBLE_KEY("optimizer", "phi", optimizer.phi),
      TSOPS_DOUBLE_KEY("optimizer", "lambda_tol", optimizer.lambda_tol),
      {"optimizer", "n_max",
       [](ProjectConfig& c, const std::string& v) {
         c.optimizer.n_max = to_size(v);
       },
       [](const ProjectConfig& c) { return std::to_string(c.optimizer.n_max); }},
      TSOPS_OPT_KEY("optimizer", "beta_max", optimizer.beta_max),
      {"optimizer", "per_av",
       [](ProjectConfig& c, const std::string& v) {
         c.optimizer.per_av = to_bool(v);
       },
       [](const ProjectConfig& c) {
         return std::string(c.optimizer.per_av ? "true" : "false");
       }},
      {"optimizer", "sensitivity",
       [](ProjectConfig& c, const std::string& v) {
         auto m = parse_sensitivity_mode(trim(v));
         if (!m) throw std::invalid_argument("expected literal or coupled");
         c.optimizer.sensitivity = *m;
       },
       [](const ProjectConfig& c) {
         return std::string(to_string(c.optimizer.sensitivity));
       }},

      TSOPS_DOUBLE_KEY("metrics", "t1", scenario.metric_t1),
      TSOPS_DOUBLE_KEY("metrics", "t2", scenario.metric_t2),
      TSOPS_OPT_KEY("metrics", "v_star", scenario.v_star),
      {"metrics", "fuel_table",
       [](ProjectConfig& c, const std::string& v) {
         c.fuel_table = trim(v);
         if (c.fuel_table.empty()) throw std::invalid_argument("empty path");
       },
       [](const ProjectConfig& c) { return c.fuel_table; }},
  };
  return table;
}

#undef TSOPS_DOUBLE_KEY
#undef TSOPS_OPT_KEY

inline const Key* find_key(const std::string& section, const std::string& name) {
  for (const auto& k : keys()) {
    if (k.section == section && k.name == name) return &k;
  }
  return nullptr;
}

inline bool known_section(const std::string& section) {
  for (const auto& k : keys()) {
    if (k.section == section) return true;
  }
  return false;
}

}  // namespace config_detail

/// Sets one dotted key, e.g. "controller.beta" = "0".
inline void apply_override(ProjectConfig& cfg, const std::string& dotted,
                           const std::string& value, std::size_t line = 0) {
  const auto dot = dotted.find('.');
  if (dot == std::string::npos) {
    throw ConfigError("expected section.key", line, dotted);
  }
  const auto* key = config_detail::find_key(dotted.substr(0, dot),
                                            dotted.substr(dot + 1));
  if (key == nullptr) throw ConfigError("unknown key", line, dotted);
  try {
    key->set(cfg, value);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what(), line, dotted);
  } catch (const std::out_of_range& e) {
    throw ConfigError(e.what(), line, dotted);
  }
}

/// Applies a "section.key=value" command-line override.
inline void apply_override(ProjectConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("override must look like section.key=value", 0,
                      assignment);
  }
  apply_override(cfg, config_detail::trim(assignment.substr(0, eq)),
                 assignment.substr(eq + 1));
}

inline void validate(const ProjectConfig& cfg) {
  try {
    validate(cfg.scenario);
    validate(cfg.optimizer);
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
}

/// Parses a configuration on top of `base` (keys not present keep their base
/// values).
inline ProjectConfig parse_config(std::istream& is, ProjectConfig base = {}) {
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find_first_of("#;");
    const auto body = config_detail::trim(
        hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    if (body.front() == '[') {
      if (body.back() != ']') {
        throw ConfigError("unterminated section header", line_no);
      }
      section = config_detail::trim(body.substr(1, body.size() - 2));
      if (!config_detail::known_section(section)) {
        throw ConfigError("unknown section", line_no, section);
      }
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("expected key = value", line_no);
    }
    if (section.empty()) {
      throw ConfigError("key outside of any section", line_no);
    }
    apply_override(base, section + "." + config_detail::trim(body.substr(0, eq)),
                   body.substr(eq + 1), line_no);
  }
  validate(base);
  return base;
}

inline ProjectConfig parse_config(const std::string& text,
                                  ProjectConfig base = {}) {
  std::istringstream is(text);
  return parse_config(is, std::move(base));
}

/// Writes every key; parse_config(dump_config(c)) == c.
inline void dump_config(std::ostream& os, const ProjectConfig& cfg) {
  std::string section;
  for (const auto& k : config_detail::keys()) {
    if (k.section != section) {
      if (!section.empty()) os << "\n";
      section = k.section;
      os << "[" << section << "]\n";
    }
    os << k.name << " = " << k.get(cfg) << "\n";
  }
}

inline std::string dump_config(const ProjectConfig& cfg) {
  std::ostringstream os;
  dump_config(os, cfg);
  return os.str();
}

// ---------------------------------------------------------------------------
// Bundled presets

inline const char* preset_text(const std::string& name) {
  static const char* kScenario1 = R"(# Human drivers with mild stop-and-go oscillation; OVRV automated vehicles.
[scenario]
name = scenario1
n_followers = 10
mpr = 0.1
t_f = 500
dt = 0.1
integrator = rk4
lead_profile = 0:21 100:21 120:18 140:18 160:21
min_safe_spacing = 2
initial_spacing = auto

[hv_model]
a = 0.6
b = 2.5
v0 = 35
s0 = 2
T = 1.5
delta = 4
length = 5

[av_model]
k1 = 0.02
k2 = 0.13
eta = 21.51
tau = 1.71
length = 5

[controller]
kind = ts-ops
law = arctan
beta = 0.0641967
gamma = 1.0011
per_vehicle = none
beta_bound_spacing = 52.42
phi1 = 1
phi2 = 0.1
phi3 = 0.01
v_star = auto

[optimizer]
beta0 = 0
gamma0 = 1
epsilon = 1e-5
phi = 1e-6
lambda_tol = 1e-12
n_max = 300
beta_max = auto
per_av = false
sensitivity = literal

[metrics]
t1 = 100
t2 = 250
v_star = auto
fuel_table = builtin
)";
  static const char* kScenario2 = R"(# Human drivers with strong stop-and-go oscillation; OVRV automated vehicles.
[scenario]
name = scenario2
n_followers = 10
mpr = 0.1
t_f = 500
dt = 0.1
integrator = rk4
lead_profile = 0:21 100:21 120:18 140:18 160:21
min_safe_spacing = 2
initial_spacing = auto

[hv_model]
a = 0.6
b = 5.2
v0 = 44.1
s0 = 6.3
T = 2.2
delta = 15.5
length = 5

[av_model]
k1 = 0.02
k2 = 0.13
eta = 21.51
tau = 1.71
length = 5

[controller]
kind = ts-ops
law = arctan
beta = 0.0641967
gamma = 1.0017
per_vehicle = none
beta_bound_spacing = 52.42
phi1 = 1
phi2 = 0.04
phi3 = 0.01
v_star = auto

[optimizer]
beta0 = 0
gamma0 = 1
epsilon = 1e-5
phi = 1e-6
lambda_tol = 1e-12
n_max = 300
beta_max = auto
per_av = false
sensitivity = literal

[metrics]
t1 = 100
t2 = 300
v_star = auto
fuel_table = builtin
)";
  if (name == "scenario1") return kScenario1;
  if (name == "scenario2") return kScenario2;
  return nullptr;
}

inline ProjectConfig preset(const std::string& name) {
  const char* text = preset_text(name);
  if (text == nullptr) throw ConfigError("unknown preset '" + name + "'");
  return parse_config(std::string(text));
}

/// Loads a bundled preset by name, or a configuration file by path.
inline ProjectConfig load_config(const std::string& name_or_path) {
  if (preset_text(name_or_path) != nullptr &&
      !std::filesystem::exists(name_or_path)) {
    return preset(name_or_path);
  }
  std::ifstream in(name_or_path);
  if (!in) {
    throw ConfigError("cannot open scenario file '" + name_or_path + "'");
  }
  return parse_config(in);
}

inline FuelCoefficients resolve_fuel_table(const ProjectConfig& cfg) {
  if (cfg.fuel_table == "builtin") return default_fuel_coefficients();
  return load_fuel_coefficients(cfg.fuel_table);
}

}  // namespace tsops
