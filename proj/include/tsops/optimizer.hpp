#pragma once

// Gradient-based selection of the additive controller parameters
// theta = (beta, gamma). J = 1/2 * integral (v_i - v_{i-1})^2 dt over the
// controlled AVs is minimised by projected descent, with the descent
// direction obtained from forward sensitivities z = dv_i/dtheta.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tsops/controller.hpp"
#include "tsops/dynamics.hpp"
#include "tsops/errors.hpp"
#include "tsops/simulator.hpp"

namespace tsops {

using Vec2 = std::array<double, 2>;

enum class SensitivityMode {
  // One two-state z per AV; spacing and predecessor speed are treated as
  // exogenous signals.
  kLiteral,
  // Full forward sensitivity of every platoon state.
  kCoupled,
};

inline const char* to_string(SensitivityMode m) {
  return m == SensitivityMode::kCoupled ? "coupled" : "literal";
}

inline std::optional<SensitivityMode> parse_sensitivity_mode(
    const std::string& name) {
  if (name == "literal") return SensitivityMode::kLiteral;
  if (name == "coupled") return SensitivityMode::kCoupled;
  return std::nullopt;
}

struct OptimizerConfig {
  ControllerParams theta0{0.0, 1.0};
  double epsilon = 1e-5;
  double phi = 1e-6;
  // |lambda| components at or below this count as a stationary point; the
  // default only absorbs round-off from rebuilding positions out of spacings.
  double lambda_tol = 1e-12;
  std::size_t n_max = 300;
  // Feasibility ceiling on beta; derived from the scenario when unset.
  std::optional<double> beta_max;
  bool per_av = false;
  SensitivityMode sensitivity = SensitivityMode::kLiteral;

  bool operator==(const OptimizerConfig&) const = default;
};

inline void validate(const OptimizerConfig& cfg) {
  if (!(cfg.epsilon > 0.0 && cfg.epsilon < 1.0)) {
    throw DomainError("optimizer epsilon must lie in (0, 1)");
  }
  if (!(cfg.phi > 0.0)) throw DomainError("optimizer phi must be > 0");
  if (!(cfg.lambda_tol >= 0.0)) {
    throw DomainError("optimizer lambda_tol must be >= 0");
  }
  if (cfg.n_max < 1) throw DomainError("optimizer n_max must be >= 1");
  if (cfg.beta_max && !(*cfg.beta_max > 0.0)) {
    throw DomainError("optimizer beta_max must be > 0");
  }
}

struct SensitivityState {
  double z1 = 0.0;  // dv_i / dbeta
  double z2 = 0.0;  // dv_i / dgamma

  bool operator==(const SensitivityState&) const = default;
};

/// dz/dt = (dr/dv) z + dr/dtheta for the AV law
/// r = h(s, dv, v) + beta * sigma(gamma * s * dv), with s and v_{i-1} held
/// exogenous (so d(dv)/dv = -1).
inline SensitivityState sensitivity_rhs(const SensitivityState& z,
                                        const CarFollowingInput& state,
                                        const ControllerParams& theta,
                                        const OvrvParams& av_model,
                                        Sigmoid law = Sigmoid::kArctan) {
  if (!std::isfinite(z.z1) || !std::isfinite(z.z2)) {
    throw DomainError("sensitivity_rhs: non-finite sensitivity state");
  }
  detail::require_finite(state, "sensitivity_rhs");
  if (state.spacing <= 0.0) {
    throw DomainError("sensitivity_rhs: spacing must be > 0");
  }
  const auto h = ovrv_partials(av_model);
  const auto u = additive_partials(state.spacing, state.relative_speed, theta,
                                   law);
  const double dr_dv = h.d_speed - h.d_relative_speed - u.d_relative_speed;
  return {dr_dv * z.z1 + u.d_beta, dr_dv * z.z2 + u.d_gamma};
}

namespace detail {

inline void check_grid(const Trajectory& traj, std::size_t vehicle) {
  if (vehicle == 0 || vehicle >= traj.vehicles.size()) {
    throw DomainError(concat("vehicle ", vehicle, " is not a follower"));
  }
}

}  // namespace detail

/// 1/2 * integral over [0, t_f] of (v_i - v_{i-1})^2, summed over the given
/// AVs (trapezoidal rule on the trajectory grid).
inline double objective_j(const Trajectory& traj,
                          std::span<const std::size_t> av_indices) {
  if (av_indices.empty()) throw DomainError("objective_j: no AV indices");
  double total = 0.0;
  for (std::size_t i : av_indices) {
    detail::check_grid(traj, i);
    const auto& v = traj.vehicles[i].v;
    const auto& vp = traj.vehicles[i - 1].v;
    for (std::size_t k = 1; k < traj.samples(); ++k) {
      const double g0 = v[k - 1] - vp[k - 1], g1 = v[k] - vp[k];
      total += 0.25 * (traj.t[k] - traj.t[k - 1]) * (g0 * g0 + g1 * g1);
    }
  }
  return total;
}

/// lambda = integral z(t) (v_i - v_{i-1}) dt (trapezoidal).
inline Vec2 descent_direction(const Trajectory& traj,
                              std::span<const SensitivityState> z,
                              std::size_t av_index) {
  detail::check_grid(traj, av_index);
  if (z.size() != traj.samples()) {
    throw DomainError(detail::concat("descent_direction: ", z.size(),
                                     " sensitivity samples for ",
                                     traj.samples(), " trajectory samples"));
  }
  const auto& v = traj.vehicles[av_index].v;
  const auto& vp = traj.vehicles[av_index - 1].v;
  Vec2 out{0.0, 0.0};
  for (std::size_t k = 1; k < traj.samples(); ++k) {
    const double h = 0.5 * (traj.t[k] - traj.t[k - 1]);
    const double g0 = v[k - 1] - vp[k - 1], g1 = v[k] - vp[k];
    out[0] += h * (z[k - 1].z1 * g0 + z[k].z1 * g1);
    out[1] += h * (z[k - 1].z2 * g0 + z[k].z2 * g1);
  }
  return out;
}

/// Clamps beta to [0, beta_max] and gamma to [0, inf).
inline ControllerParams project_feasible(const ControllerParams& theta,
                                         double beta_max) {
  return {std::clamp(theta.beta, 0.0, beta_max), std::max(0.0, theta.gamma)};
}

// ---------------------------------------------------------------------------
// Sensitivity co-integration

/// Literal sensitivities: one z per AV, integrated with the platoon.
class LiteralSensitivity {
 public:
  std::size_t dim(const Platoon& p) const { return 2 * p.av_indices().size(); }

  void initialize(const Platoon& p, std::span<double> z) {
    std::fill(z.begin(), z.end(), 0.0);
    series_.assign(p.av_indices().size(), {});
    for (auto& s : series_) s.reserve(p.scenario().steps() + 1);
  }

  void derivative(double t, const Platoon& p, std::span<const double> y,
                  std::span<const double> z, std::span<double> dz) const {
    const auto& av = p.av_indices();
    const auto& sc = p.scenario();
    for (std::size_t j = 0; j < av.size(); ++j) {
      const auto in = p.input(y, av[j], t);
      const auto d = sensitivity_rhs({z[2 * j], z[2 * j + 1]}, in,
                                     sc.controller.theta_for(av[j]),
                                     sc.av_model, sc.controller.law);
      dz[2 * j] = d.z1;
      dz[2 * j + 1] = d.z2;
    }
  }

  void record(std::size_t, double, const Platoon&, std::span<const double>,
              std::span<const double> z) {
    for (std::size_t j = 0; j < series_.size(); ++j) {
      series_[j].push_back({z[2 * j], z[2 * j + 1]});
    }
  }

  const std::vector<std::vector<SensitivityState>>& series() const {
    return series_;
  }

 private:
  std::vector<std::vector<SensitivityState>> series_;
};

/// Forward sensitivities of every follower's position and speed with respect
/// to theta. With per_av, each AV's theta is a separate parameter group.
class CoupledSensitivity {
 public:
  explicit CoupledSensitivity(bool per_av) : per_av_(per_av) {}

  std::size_t dim(const Platoon& p) const {
    return 2 * groups(p) * 2 * p.followers();
  }

  void initialize(const Platoon& p, std::span<double> s) {
    std::fill(s.begin(), s.end(), 0.0);
    lambda_.assign(p.av_indices().size(), {0.0, 0.0});
    prev_.assign(p.av_indices().size(), {0.0, 0.0});
    prev_gap_.assign(p.av_indices().size(), 0.0);
  }

  void derivative(double t, const Platoon& p, std::span<const double> y,
                  std::span<const double> s, std::span<double> ds) const {
    const std::size_t n = p.followers();
    const auto& sc = p.scenario();
    const auto& av = p.av_indices();
    const std::size_t cols = 2 * groups(p);
    for (std::size_t i = 1; i <= n; ++i) {
      const auto in = p.input(y, i, t);
      AccelPartials f = p.is_av(i) ? ovrv_partials(sc.av_model)
                                   : idm_partials(in, sc.hv_model);
      AdditivePartials u;
      std::size_t group = 0;
      if (p.is_av(i)) {
        u = additive_partials(in.spacing, in.relative_speed,
                              sc.controller.theta_for(i), sc.controller.law);
        f.d_spacing += u.d_spacing;
        f.d_relative_speed += u.d_relative_speed;
        if (per_av_) {
          group = static_cast<std::size_t>(
              std::find(av.begin(), av.end(), i) - av.begin());
        }
      }
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t base = c * 2 * n;
        const double sx = s[base + i - 1], sv = s[base + n + i - 1];
        const double sx_prev = i > 1 ? s[base + i - 2] : 0.0;
        const double sv_prev = i > 1 ? s[base + n + i - 2] : 0.0;
        double dsv = f.d_spacing * (sx_prev - sx) +
                     f.d_relative_speed * (sv_prev - sv) + f.d_speed * sv;
        if (p.is_av(i) && c / 2 == group) {
          dsv += c % 2 == 0 ? u.d_beta : u.d_gamma;
        }
        ds[base + i - 1] = sv;
        ds[base + n + i - 1] = dsv;
      }
    }
  }

  void record(std::size_t k, double t, const Platoon& p,
              std::span<const double> y, std::span<const double> s) {
    const std::size_t n = p.followers();
    const auto& av = p.av_indices();
    for (std::size_t j = 0; j < av.size(); ++j) {
      const std::size_t i = av[j];
      const double gap = y[n + i] - p.v(y, i - 1, t);
      const std::size_t group = per_av_ ? j : 0;
      Vec2 z{};
      for (std::size_t q = 0; q < 2; ++q) {
        const std::size_t base = (2 * group + q) * 2 * n;
        const double sv = s[base + n + i - 1];
        const double sv_prev = i > 1 ? s[base + n + i - 2] : 0.0;
        z[q] = sv - sv_prev;
      }
      if (k > 0) {
        const double h = 0.5 * (t - prev_t_);
        for (std::size_t q = 0; q < 2; ++q) {
          lambda_[j][q] += h * (prev_[j][q] * prev_gap_[j] + z[q] * gap);
        }
      }
      prev_[j] = z;
      prev_gap_[j] = gap;
    }
    prev_t_ = t;
  }

  /// Gradient of each AV's J_i with respect to the theta of its group.
  const std::vector<Vec2>& lambda() const { return lambda_; }

 private:
  std::size_t groups(const Platoon& p) const {
    return per_av_ ? std::max<std::size_t>(1, p.av_indices().size()) : 1;
  }

  bool per_av_;
  std::vector<Vec2> lambda_, prev_;
  std::vector<double> prev_gap_;
  double prev_t_ = 0.0;
};

struct GradientEvaluation {
  Trajectory trajectory;
  double J = 0.0;
  std::vector<double> J_per_av;
  // Per AV: gradient of that AV's J_i with respect to theta.
  std::vector<Vec2> lambda_per_av;
  // Sum over AVs.
  Vec2 lambda{0.0, 0.0};
  // Literal mode only: z series per AV.
  std::vector<std::vector<SensitivityState>> z;
};

/// Simulates the scenario and returns J with its descent direction.
inline GradientEvaluation evaluate_gradient(
    const Scenario& sc, SensitivityMode mode = SensitivityMode::kLiteral,
    bool per_av = false) {
  if (sc.controller.kind != ControllerKind::kTsOps) {
    throw DomainError("gradient evaluation requires the ts-ops controller");
  }
  GradientEvaluation out;
  if (mode == SensitivityMode::kLiteral) {
    LiteralSensitivity ext;
    out.trajectory = simulate_with(sc, ext);
    out.z = ext.series();
    for (std::size_t j = 0; j < out.trajectory.av_indices.size(); ++j) {
      out.lambda_per_av.push_back(descent_direction(
          out.trajectory, out.z[j], out.trajectory.av_indices[j]));
    }
  } else {
    CoupledSensitivity ext(per_av);
    out.trajectory = simulate_with(sc, ext);
    out.lambda_per_av = ext.lambda();
  }
  const auto& av = out.trajectory.av_indices;
  if (av.empty()) throw DomainError("no AV to tune");
  for (std::size_t j = 0; j < av.size(); ++j) {
    const std::size_t one[] = {av[j]};
    out.J_per_av.push_back(objective_j(out.trajectory, one));
    out.J += out.J_per_av.back();
    out.lambda[0] += out.lambda_per_av[j][0];
    out.lambda[1] += out.lambda_per_av[j][1];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Iterative procedure

enum class TerminationReason { kConverged, kStationary, kMaxIterations };

inline const char* to_string(TerminationReason r) {
  switch (r) {
    case TerminationReason::kStationary:
      return "stationary";
    case TerminationReason::kMaxIterations:
      return "max-iterations";
    case TerminationReason::kConverged:
      break;
  }
  return "converged";
}

struct IterationRecord {
  std::size_t iter = 0;
  double J = 0.0;
  // Shared mode: one entry for all AVs (vehicle 0). Per-AV mode: one entry
  // per AV.
  std::vector<std::size_t> vehicles;
  std::vector<ControllerParams> theta;
  std::vector<Vec2> lambda;
};

struct OptimizationTrace {
  std::vector<IterationRecord> iterations;
  TerminationReason reason = TerminationReason::kMaxIterations;

  std::vector<double> objective_values() const {
    std::vector<double> out;
    for (const auto& it : iterations) out.push_back(it.J);
    return out;
  }
};

struct OptimizeResult {
  ControllerParams theta;  // shared theta (first AV's in per-AV mode)
  std::map<std::size_t, ControllerParams> per_vehicle;
  double J = 0.0;
  double beta_max = 0.0;
  OptimizationTrace trace;
};

class OptimizerError : public std::runtime_error {
 public:
  OptimizerError(const std::string& what, OptimizationTrace trace)
      : std::runtime_error(what), trace_(std::move(trace)) {}
  const OptimizationTrace& trace() const noexcept { return trace_; }

 private:
  OptimizationTrace trace_;
};

/// Projected descent theta <- P(theta - epsilon * lambda), stopping when
/// |J^(k) - J^(k-1)| <= phi, when lambda vanishes, or after n_max
/// iterations. Returns the lowest-J iterate.
inline OptimizeResult optimize(const Scenario& scenario,
                               const OptimizerConfig& cfg) {
  validate(cfg);
  validate(scenario);
  Scenario sc = scenario;
  sc.controller.kind = ControllerKind::kTsOps;
  const auto av = sc.av_indices();
  if (av.empty()) throw DomainError("no AV to tune (MPR rounds to zero AVs)");

  OptimizeResult result;
  result.beta_max = cfg.beta_max.value_or(scenario_beta_max(sc));

  std::vector<std::size_t> groups;
  std::vector<ControllerParams> theta;
  if (cfg.per_av) {
    groups = av;
  } else {
    groups = {0};
  }
  theta.assign(groups.size(), project_feasible(cfg.theta0, result.beta_max));

  auto apply = [&](Scenario& s) {
    s.controller.per_vehicle.clear();
    if (cfg.per_av) {
      for (std::size_t g = 0; g < groups.size(); ++g) {
        s.controller.per_vehicle[groups[g]] = theta[g];
      }
      s.controller.theta = theta.front();
    } else {
      s.controller.theta = theta.front();
    }
  };

  OptimizationTrace trace;
  double best_j = std::numeric_limits<double>::infinity();
  std::vector<ControllerParams> best = theta;
  for (std::size_t kappa = 1; kappa <= cfg.n_max; ++kappa) {
    apply(sc);
    GradientEvaluation eval;
    try {
      eval = evaluate_gradient(sc, cfg.sensitivity, cfg.per_av);
    } catch (const NumericalError& e) {
      throw OptimizerError(
          detail::concat("iteration ", kappa, ": ", e.what()), trace);
    }

    IterationRecord rec;
    rec.iter = kappa;
    rec.J = eval.J;
    rec.vehicles = groups;
    rec.theta = theta;
    if (cfg.per_av) {
      rec.lambda = eval.lambda_per_av;
    } else {
      rec.lambda = {eval.lambda};
    }
    trace.iterations.push_back(rec);
    if (eval.J < best_j) {
      best_j = eval.J;
      best = theta;
    }

    if (kappa > 1) {
      const double prev = trace.iterations[kappa - 2].J;
      if (std::abs(eval.J - prev) <= cfg.phi) {
        trace.reason = TerminationReason::kConverged;
        break;
      }
    }
    const bool stationary = std::all_of(
        rec.lambda.begin(), rec.lambda.end(),
        [&](const Vec2& l) {
          return std::abs(l[0]) <= cfg.lambda_tol &&
                 std::abs(l[1]) <= cfg.lambda_tol;
        });
    if (stationary) {
      trace.reason = TerminationReason::kStationary;
      break;
    }
    if (kappa == cfg.n_max) {
      trace.reason = TerminationReason::kMaxIterations;
      break;
    }
    for (std::size_t g = 0; g < groups.size(); ++g) {
      theta[g] = project_feasible({theta[g].beta - cfg.epsilon * rec.lambda[g][0],
                                   theta[g].gamma - cfg.epsilon * rec.lambda[g][1]},
                                  result.beta_max);
    }
  }

  result.theta = best.front();
  if (cfg.per_av) {
    for (std::size_t g = 0; g < groups.size(); ++g) {
      result.per_vehicle[groups[g]] = best[g];
    }
  }
  result.J = best_j;
  result.trace = std::move(trace);
  return result;
}

/// Applies an optimisation result to a scenario's controller.
inline void apply_result(Scenario& sc, const OptimizeResult& r) {
  sc.controller.kind = ControllerKind::kTsOps;
  sc.controller.theta = r.theta;
  sc.controller.per_vehicle = r.per_vehicle;
}

/// CSV `iter,beta,gamma,J,lambda_beta,lambda_gamma`; per-AV traces carry an
/// extra `vehicle` column after `iter`.
inline void write_trace_csv(std::ostream& os, const OptimizationTrace& trace) {
  const bool per_av = !trace.iterations.empty() &&
                      trace.iterations.front().vehicles.front() != 0;
  os << (per_av ? "iter,vehicle,beta,gamma,J,lambda_beta,lambda_gamma\n"
                : "iter,beta,gamma,J,lambda_beta,lambda_gamma\n");
  char buf[256];
  for (const auto& it : trace.iterations) {
    for (std::size_t g = 0; g < it.theta.size(); ++g) {
      if (per_av) {
        std::snprintf(buf, sizeof buf, "%zu,%zu,%.10g,%.10g,%.10g,%.10g,%.10g\n",
                      it.iter, it.vehicles[g], it.theta[g].beta,
                      it.theta[g].gamma, it.J, it.lambda[g][0], it.lambda[g][1]);
      } else {
        std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g,%.10g,%.10g,%.10g\n",
                      it.iter, it.theta[g].beta, it.theta[g].gamma, it.J,
                      it.lambda[g][0], it.lambda[g][1]);
      }
      os << buf;
    }
  }
}

}  // namespace tsops
