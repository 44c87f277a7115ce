#pragma once

// Command implementations behind the `tsops` executable. Each command takes
// a RunConfig plus output/diagnostic streams and returns a process exit
// status, so they can be driven from tests without spawning a process.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "tsops/config.hpp"
#include "tsops/errors.hpp"
#include "tsops/metrics.hpp"
#include "tsops/optimizer.hpp"
#include "tsops/simulator.hpp"

namespace tsops::cli {

enum ExitCode : int {
  kOk = 0,
  kConfigFailure = 1,
  kNumericalFailure = 2,
  kSafetyFailure = 3,
};

/// Inclusive range lo:hi sampled at n evenly spaced points.
struct GridRange {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t n = 1;

  std::vector<double> values() const {
    std::vector<double> out;
    if (n == 1) return {lo};
    for (std::size_t k = 0; k < n; ++k) {
      out.push_back(lo + (hi - lo) * static_cast<double>(k) /
                             static_cast<double>(n - 1));
    }
    return out;
  }
};

inline GridRange parse_range(const std::string& text, const std::string& flag) {
  const auto parts = config_detail::split(text, ':');
  if (parts.size() != 3) {
    throw ConfigError("range must look like lo:hi:n", 0, flag);
  }
  try {
    GridRange r{config_detail::to_double(parts[0]),
                config_detail::to_double(parts[1]),
                config_detail::to_size(parts[2])};
    if (r.n == 0) throw std::invalid_argument("n must be >= 1");
    if (r.hi < r.lo) throw std::invalid_argument("hi must be >= lo");
    return r;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what(), 0, flag);
  }
}

inline std::vector<double> parse_mpr_list(const std::string& text) {
  std::vector<double> out;
  try {
    for (const auto& tok : config_detail::split(text, ',')) {
      const double m = config_detail::to_double(tok);
      if (!(m >= 0.0 && m <= 1.0)) {
        throw std::invalid_argument("MPR " + tok + " outside [0,1]");
      }
      out.push_back(m);
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what(), 0, "--mprs");
  }
  if (out.empty()) throw ConfigError("empty MPR list", 0, "--mprs");
  return out;
}

inline std::vector<double> default_mprs() {
  std::vector<double> out;
  for (int k = 0; k <= 10; ++k) out.push_back(0.1 * k);
  return out;
}

struct RunConfig {
  std::string command = "run";  // run | tune | sweep | grid
  std::string scenario = "scenario1";  // preset name or file path
  std::filesystem::path out_dir = ".";
  // Applied in order after the convenience flags below.
  std::vector<std::string> overrides;
  std::vector<double> mprs = default_mprs();
  std::optional<GridRange> beta_range;
  std::optional<GridRange> gamma_range;
  std::optional<std::string> controller;
  std::optional<double> dt;
  std::optional<std::string> integrator;
  bool tune_first = false;
  bool strict_safety = false;
  bool dump_config = false;
  bool gnuplot = false;
  std::size_t threads = 0;  // 0: hardware concurrency
};

/// Scenario file (or preset) with the command-line overrides applied.
inline ProjectConfig resolve_config(const RunConfig& rc) {
  ProjectConfig cfg = load_config(rc.scenario);
  if (rc.controller) apply_override(cfg, "controller.kind", *rc.controller);
  if (rc.dt) apply_override(cfg, "scenario.dt", config_detail::fmt(*rc.dt));
  if (rc.integrator) apply_override(cfg, "scenario.integrator", *rc.integrator);
  for (const auto& o : rc.overrides) apply_override(cfg, o);
  validate(cfg);
  return cfg;
}

namespace detail {

inline std::size_t worker_count(std::size_t requested, std::size_t jobs) {
  std::size_t n = requested;
  if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
  return std::max<std::size_t>(1, std::min(n, jobs));
}

// Runs fn(0..count-1) on a small pool; fn must not share mutable state.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn) {
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < count; k = next++) fn(k);
  };
  const std::size_t n = worker_count(threads, count);
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < n; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
}

inline std::ofstream open_output(const std::filesystem::path& dir,
                                 const std::string& name) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  std::ofstream os(dir / name);
  if (!os) {
    throw ConfigError("cannot write '" + (dir / name).string() + "'", 0,
                      "--out");
  }
  return os;
}

inline void write_gnuplot(const std::filesystem::path& dir,
                          const std::string& name, const std::string& body) {
  auto os = open_output(dir, name);
  os << "# gnuplot script; run from the output directory: gnuplot -p " << name
     << "\nset datafile separator ','\nset key outside\n"
     << body;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Library-level workflows shared by the commands and the acceptance suite

struct RunOutcome {
  Trajectory trajectory;
  MetricsReport metrics;
  std::vector<SafetyViolation> violations;
};

inline RunOutcome run_scenario(const Scenario& sc, const FuelCoefficients& c) {
  RunOutcome out;
  out.trajectory = simulate(sc);
  out.metrics = summarize(out.trajectory, sc, c);
  out.violations = check_safety(out.trajectory, sc.min_safe());
  return out;
}

struct SweepRow {
  double mpr = 0.0;
  double asv = 0.0;
  double fc = 0.0;
  double asv_impr_pct = 0.0;
  double fc_impr_pct = 0.0;
  std::size_t violations = 0;
  ControllerParams theta;
  std::string error;  // empty on success

  bool ok() const { return error.empty(); }
};

/// Runs every MPR (optionally tuning theta at each one first) and reports
/// improvements relative to the MPR=0 run. A failing MPR is recorded in its
/// row and the rest of the sweep continues.
inline std::vector<SweepRow> run_sweep(const ProjectConfig& cfg,
                                       const std::vector<double>& mprs,
                                       bool tune_first,
                                       std::size_t threads = 0) {
  const auto fuel = resolve_fuel_table(cfg);
  std::vector<SweepRow> rows(mprs.size());
  auto eval = [&](double mpr, SweepRow& row) {
    row.mpr = mpr;
    try {
      Scenario sc = cfg.scenario;
      sc.mpr = mpr;
      if (tune_first && sc.controller.kind == ControllerKind::kTsOps &&
          !sc.av_indices().empty()) {
        apply_result(sc, optimize(sc, cfg.optimizer));
      }
      row.theta = sc.controller.theta;
      const auto out = run_scenario(sc, fuel);
      row.asv = out.metrics.platoon_asv;
      row.fc = out.metrics.platoon_fc;
      row.violations = out.violations.size();
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  };
  detail::parallel_for(mprs.size(), threads,
                       [&](std::size_t k) { eval(mprs[k], rows[k]); });

  SweepRow base;
  const auto it = std::find_if(rows.begin(), rows.end(),
                               [](const SweepRow& r) { return r.mpr == 0.0; });
  if (it != rows.end()) {
    base = *it;
  } else {
    eval(0.0, base);
  }
  for (auto& r : rows) {
    if (!r.ok()) continue;
    if (!base.ok()) {
      r.error = "baseline (MPR=0) failed: " + base.error;
      continue;
    }
    r.asv_impr_pct = 100.0 * (base.asv - r.asv) / base.asv;
    r.fc_impr_pct = 100.0 * (base.fc - r.fc) / base.fc;
  }
  return rows;
}

struct GridPoint {
  double beta = 0.0;
  double gamma = 0.0;
  double asv = 0.0;
  double fc = 0.0;
  std::string error;
};

/// Rejects ranges outside the feasible set 0 <= beta <= beta_max, gamma >= 0.
inline void check_grid_ranges(const Scenario& sc, const GridRange& beta,
                              const GridRange& gamma) {
  const double beta_max = scenario_beta_max(sc);
  if (beta.lo < 0.0 || beta.hi > beta_max * (1.0 + 1e-12)) {
    throw ConfigError(
        tsops::detail::concat("beta range [", beta.lo, ", ", beta.hi,
                              "] leaves the feasible set [0, ", beta_max, "]"),
        0, "--beta-range");
  }
  if (gamma.lo < 0.0) {
    throw ConfigError("gamma range must be >= 0", 0, "--gamma-range");
  }
}

/// ASV and FC of the TS-OPS controlled platoon at every (beta, gamma) pair.
inline std::vector<GridPoint> run_grid(const ProjectConfig& cfg,
                                       const GridRange& beta,
                                       const GridRange& gamma,
                                       std::size_t threads = 0) {
  Scenario base = cfg.scenario;
  base.controller.kind = ControllerKind::kTsOps;
  base.controller.per_vehicle.clear();
  check_grid_ranges(base, beta, gamma);
  const auto fuel = resolve_fuel_table(cfg);
  std::vector<GridPoint> points;
  for (double b : beta.values()) {
    for (double g : gamma.values()) points.push_back({b, g, 0.0, 0.0, {}});
  }
  detail::parallel_for(points.size(), threads, [&](std::size_t k) {
    auto& p = points[k];
    try {
      Scenario sc = base;
      sc.controller.theta = {p.beta, p.gamma};
      const auto out = run_scenario(sc, fuel);
      p.asv = out.metrics.platoon_asv;
      p.fc = out.metrics.platoon_fc;
    } catch (const std::exception& e) {
      p.error = e.what();
    }
  });
  return points;
}

// ---------------------------------------------------------------------------
// Commands

inline int cmd_run(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  const ProjectConfig cfg = resolve_config(rc);
  const auto fuel = resolve_fuel_table(cfg);
  const auto res = run_scenario(cfg.scenario, fuel);
  {
    auto os = detail::open_output(rc.out_dir, "trajectory.csv");
    write_trajectory_csv(os, res.trajectory);
  }
  {
    auto os = detail::open_output(rc.out_dir, "metrics.csv");
    write_metrics_csv(os, res.metrics);
  }
  {
    auto os = detail::open_output(rc.out_dir, "safety.csv");
    write_safety_csv(os, res.violations);
  }
  if (rc.gnuplot) {
    detail::write_gnuplot(
        rc.out_dir, "trajectory.gp",
        "set xlabel 't [s]'\nset ylabel 'v [m/s]'\n"
        "plot for [i=0:" + std::to_string(cfg.scenario.n_followers) +
            "] 'trajectory.csv' using ($2==i ? $1 : 1/0):5 "
            "with lines title sprintf('vehicle %d', i)\n");
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "platoon ASV %.6f m/s, FC %.4f ml over [%g, %g] s\n",
                res.metrics.platoon_asv, res.metrics.platoon_fc, res.metrics.t1,
                res.metrics.t2);
  out << buf;
  if (cfg.scenario.controller.kind == ControllerKind::kTsOps) {
    const double beta_max = scenario_beta_max(cfg.scenario);
    auto over = [&](const ControllerParams& th) { return th.beta > beta_max; };
    bool exceeds = over(cfg.scenario.controller.theta);
    for (const auto& [i, th] : cfg.scenario.controller.per_vehicle) {
      exceeds = exceeds || over(th);
    }
    if (exceeds) {
      err << "warning: beta exceeds the safety bound " << beta_max
          << "; the minimum-spacing guarantee does not apply\n";
    }
  }
  if (res.metrics.fuel_saturated) {
    err << "warning: fuel rate saturated at exp(" << kMaxFuelExponent
        << ") for some samples\n";
  }
  if (res.trajectory.speed_floor_hits > 0) {
    err << "note: speed floor engaged " << res.trajectory.speed_floor_hits
        << " times\n";
  }
  if (!res.violations.empty()) {
    const auto& first = res.violations.front();
    err << (rc.strict_safety ? "error: " : "warning: ") << res.violations.size()
        << " samples below the minimum safe spacing " << cfg.scenario.min_safe()
        << " m (first: vehicle " << first.vehicle << " at t=" << first.time
        << ", s=" << first.spacing << ")\n";
    if (rc.strict_safety) return kSafetyFailure;
  }
  return kOk;
}

inline int cmd_tune(const RunConfig& rc, std::ostream& out, std::ostream&) {
  const ProjectConfig cfg = resolve_config(rc);
  const auto r = optimize(cfg.scenario, cfg.optimizer);
  {
    auto os = detail::open_output(rc.out_dir, "trace.csv");
    write_trace_csv(os, r.trace);
  }
  {
    auto os = detail::open_output(rc.out_dir, "theta_opt.csv");
    os << "vehicle,beta,gamma,J,beta_max,iterations,reason\n";
    char buf[256];
    auto row = [&](const std::string& who, const ControllerParams& th) {
      std::snprintf(buf, sizeof buf, "%s,%.10g,%.10g,%.10g,%.10g,%zu,%s\n",
                    who.c_str(), th.beta, th.gamma, r.J, r.beta_max,
                    r.trace.iterations.size(), to_string(r.trace.reason));
      os << buf;
    };
    if (r.per_vehicle.empty()) {
      row("all", r.theta);
    } else {
      for (const auto& [i, th] : r.per_vehicle) row(std::to_string(i), th);
    }
  }
  if (rc.gnuplot) {
    detail::write_gnuplot(rc.out_dir, "trace.gp",
                          "set xlabel 'iteration'\nset ylabel 'J'\n"
                          "plot 'trace.csv' every ::1 using 1:4 with linespoints "
                          "title 'J'\n");
  }
  char buf[200];
  std::snprintf(buf, sizeof buf,
                "theta: beta=%.6f gamma=%.6f  J=%.6f  (%zu iterations, %s, "
                "beta_max=%.6f)\n",
                r.theta.beta, r.theta.gamma, r.J, r.trace.iterations.size(),
                to_string(r.trace.reason), r.beta_max);
  out << buf;
  for (const auto& [i, th] : r.per_vehicle) {
    std::snprintf(buf, sizeof buf, "  vehicle %zu: beta=%.6f gamma=%.6f\n", i,
                  th.beta, th.gamma);
    out << buf;
  }
  return kOk;
}

inline int cmd_sweep(const RunConfig& rc, std::ostream& out,
                     std::ostream& err) {
  const ProjectConfig cfg = resolve_config(rc);
  const auto rows = run_sweep(cfg, rc.mprs, rc.tune_first, rc.threads);
  auto os = detail::open_output(rc.out_dir, "sweep.csv");
  os << "mpr,asv,fc,asv_impr_pct,fc_impr_pct\n";
  bool failed = false;
  bool unsafe = false;
  char buf[200];
  for (const auto& r : rows) {
    if (r.ok()) {
      std::snprintf(buf, sizeof buf, "%.6g,%.6f,%.6f,%.6f,%.6f\n", r.mpr, r.asv,
                    r.fc, r.asv_impr_pct, r.fc_impr_pct);
      out << buf;
    } else {
      std::snprintf(buf, sizeof buf, "%.6g,nan,nan,nan,nan\n", r.mpr);
      err << "error: MPR " << r.mpr << ": " << r.error << "\n";
      failed = true;
    }
    os << buf;
    if (r.violations > 0) {
      err << (rc.strict_safety ? "error: " : "warning: ") << "MPR " << r.mpr
          << ": " << r.violations << " samples below the minimum safe spacing\n";
      unsafe = true;
    }
  }
  if (rc.gnuplot) {
    detail::write_gnuplot(rc.out_dir, "sweep.gp",
                          "set xlabel 'MPR'\nset ylabel 'improvement [%]'\n"
                          "plot 'sweep.csv' every ::1 using 1:4 with linespoints "
                          "title 'ASV', '' every ::1 using 1:5 with linespoints "
                          "title 'FC'\n");
  }
  if (failed) return kNumericalFailure;
  if (unsafe && rc.strict_safety) return kSafetyFailure;
  return kOk;
}

inline int cmd_grid(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  const ProjectConfig cfg = resolve_config(rc);
  const double beta_max = scenario_beta_max(cfg.scenario);
  const GridRange beta = rc.beta_range.value_or(GridRange{0.0, beta_max, 11});
  const GridRange gamma = rc.gamma_range.value_or(GridRange{0.5, 1.5, 11});
  const auto points = run_grid(cfg, beta, gamma, rc.threads);
  auto os = detail::open_output(rc.out_dir, "grid.csv");
  os << "beta,gamma,asv,fc\n";
  bool failed = false;
  char buf[160];
  for (const auto& p : points) {
    if (p.error.empty()) {
      std::snprintf(buf, sizeof buf, "%.10g,%.10g,%.6f,%.6f\n", p.beta, p.gamma,
                    p.asv, p.fc);
    } else {
      std::snprintf(buf, sizeof buf, "%.10g,%.10g,nan,nan\n", p.beta, p.gamma);
      err << "error: beta=" << p.beta << " gamma=" << p.gamma << ": " << p.error
          << "\n";
      failed = true;
    }
    os << buf;
  }
  if (rc.gnuplot) {
    detail::write_gnuplot(rc.out_dir, "grid.gp",
                          "set xlabel 'beta'\nset ylabel 'gamma'\n"
                          "set dgrid3d " + std::to_string(beta.n) + "," +
                              std::to_string(gamma.n) +
                              "\nsplot 'grid.csv' every ::1 using 1:2:3 with "
                              "lines title 'ASV'\n");
  }
  out << "wrote " << points.size() << " grid points to "
      << (rc.out_dir / "grid.csv").string() << "\n";
  return failed ? kNumericalFailure : kOk;
}

/// Runs rc.command, mapping failures to exit codes with a diagnostic on err.
inline int dispatch(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  try {
    if (rc.dump_config) {
      dump_config(out, resolve_config(rc));
      return kOk;
    }
    if (rc.command == "run") return cmd_run(rc, out, err);
    if (rc.command == "tune") return cmd_tune(rc, out, err);
    if (rc.command == "sweep") return cmd_sweep(rc, out, err);
    if (rc.command == "grid") return cmd_grid(rc, out, err);
    err << "error: unknown command '" << rc.command << "'\n";
    return kConfigFailure;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigFailure;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kNumericalFailure;
  } catch (const OptimizerError& e) {
    err << "optimizer error: " << e.what() << " (after "
        << e.trace().iterations.size() << " iterations)\n";
    return kNumericalFailure;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << "\n";
    return kConfigFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kNumericalFailure;
  }
}

}  // namespace tsops::cli
