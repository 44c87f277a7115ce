#pragma once

// Platoon simulation: a kinematic leader followed by N vehicles, each either
// an IDM human driver or an OVRV automated vehicle with an additive control
// input.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tsops/controller.hpp"
#include "tsops/dynamics.hpp"
#include "tsops/errors.hpp"
#include "tsops/integrator.hpp"

namespace tsops {

/// Piecewise-linear lead speed schedule, held constant after the last knot.
struct LeadProfile {
  struct Knot {
    double t = 0.0;
    double v = 0.0;
    bool operator==(const Knot&) const = default;
  };
  std::vector<Knot> knots;

  bool operator==(const LeadProfile&) const = default;

  double initial_speed() const {
    return knots.empty() ? 0.0 : knots.front().v;
  }

  void validate() const {
    if (knots.empty()) throw DomainError("lead profile has no knots");
    if (knots.front().t != 0.0) {
      throw DomainError("lead profile must start at t=0");
    }
    for (std::size_t i = 0; i < knots.size(); ++i) {
      if (!std::isfinite(knots[i].v) || knots[i].v < 0.0) {
        throw DomainError(detail::concat("lead profile speed at knot ", i,
                                         " must be finite and >= 0"));
      }
      if (i > 0 && !(knots[i].t > knots[i - 1].t)) {
        throw DomainError("lead profile times must be strictly increasing");
      }
    }
  }

  // Slope of the segment containing t (right-continuous).
  double slope(double t) const {
    for (std::size_t i = 1; i < knots.size(); ++i) {
      if (t < knots[i].t) {
        if (t < knots[i - 1].t) return 0.0;
        return (knots[i].v - knots[i - 1].v) / (knots[i].t - knots[i - 1].t);
      }
    }
    return 0.0;
  }
};

/// Constant cruise at v0 for 100 s, brake to v_low over 20 s, hold for 20 s,
/// recover over 20 s, then cruise.
inline LeadProfile standard_lead_profile(double v0 = 21.0,
                                         double v_low = 18.0) {
  return {{{0.0, v0}, {100.0, v0}, {120.0, v_low}, {140.0, v_low},
           {160.0, v0}}};
}

inline LeadProfile constant_lead_profile(double v) { return {{{0.0, v}}}; }

/// Lead speed at time t. Throws if t lies outside [0, horizon].
inline double lead_speed(double t, const LeadProfile& profile,
                         double horizon = std::numeric_limits<double>::infinity()) {
  constexpr double kSlack = 1e-9;
  if (!std::isfinite(t) || t < -kSlack || t > horizon + kSlack) {
    throw DomainError(detail::concat("lead_speed: t=", t,
                                     " outside [0, ", horizon, "]"));
  }
  const auto& k = profile.knots;
  if (k.empty()) throw DomainError("lead profile has no knots");
  if (t <= k.front().t) return k.front().v;
  for (std::size_t i = 1; i < k.size(); ++i) {
    if (t <= k[i].t) {
      const double w = (t - k[i - 1].t) / (k[i].t - k[i - 1].t);
      return k[i - 1].v + w * (k[i].v - k[i - 1].v);
    }
  }
  return k.back().v;
}

/// 1-based follower indices of the AVs: m = round(mpr * n) of them at
/// floor(k * (n + 1) / (m + 1)), k = 1..m.
inline std::vector<std::size_t> place_avs(std::size_t n, double mpr) {
  if (n == 0) throw DomainError("place_avs: platoon needs at least 1 follower");
  if (!(mpr >= 0.0 && mpr <= 1.0)) {
    throw DomainError(detail::concat("place_avs: mpr must be in [0,1], got ",
                                     mpr));
  }
  const auto m = static_cast<std::size_t>(
      std::llround(mpr * static_cast<double>(n)));
  std::vector<std::size_t> out;
  out.reserve(m);
  for (std::size_t k = 1; k <= m; ++k) {
    out.push_back(k * (n + 1) / (m + 1));
  }
  return out;
}

enum class ControllerKind { kNone, kTsOps, kTsTrc };

inline const char* to_string(ControllerKind k) {
  switch (k) {
    case ControllerKind::kNone:
      return "none";
    case ControllerKind::kTsTrc:
      return "ts-trc";
    case ControllerKind::kTsOps:
      break;
  }
  return "ts-ops";
}

inline std::optional<ControllerKind> parse_controller_kind(
    const std::string& name) {
  if (name == "none") return ControllerKind::kNone;
  if (name == "ts-ops") return ControllerKind::kTsOps;
  if (name == "ts-trc") return ControllerKind::kTsTrc;
  return std::nullopt;
}

struct ControllerConfig {
  ControllerKind kind = ControllerKind::kTsOps;
  Sigmoid law = Sigmoid::kArctan;
  ControllerParams theta{0.0642, 1.0011};
  // Follower index -> theta, for AVs tuned individually.
  std::map<std::size_t, ControllerParams> per_vehicle;
  TsTrcParams trc;
  // TS-TRC equilibrium speed; the lead's initial speed when unset.
  std::optional<double> v_star;
  // s_i(0) entering the beta bound; the smallest AV initial spacing when
  // unset.
  std::optional<double> beta_bound_spacing;

  bool operator==(const ControllerConfig&) const = default;

  const ControllerParams& theta_for(std::size_t vehicle) const {
    auto it = per_vehicle.find(vehicle);
    return it == per_vehicle.end() ? theta : it->second;
  }
};

struct Scenario {
  std::string name = "custom";
  std::size_t n_followers = 10;
  double mpr = 0.0;
  IdmParams hv_model = kIdmLowOscillation;
  OvrvParams av_model = kOvrvDefault;
  ControllerConfig controller;
  LeadProfile lead = standard_lead_profile();
  double t_f = 500.0;
  double dt = 0.1;
  Integrator integrator = Integrator::kRk4;
  double metric_t1 = 100.0;
  double metric_t2 = 250.0;
  // Defaults to the IDM jam spacing s0.
  std::optional<double> min_safe_spacing;
  // Empty: each follower starts at its own equilibrium spacing. One value:
  // applied to every follower. n values: per follower.
  std::vector<double> initial_spacing;
  // Desired speed for ASV; defaults to the lead's initial speed.
  std::optional<double> v_star;

  bool operator==(const Scenario&) const = default;

  double min_safe() const { return min_safe_spacing.value_or(hv_model.s0); }
  double desired_speed() const { return v_star.value_or(lead.initial_speed()); }
  std::vector<std::size_t> av_indices() const {
    return place_avs(n_followers, mpr);
  }
  std::size_t steps() const {
    return static_cast<std::size_t>(std::llround(t_f / dt));
  }
};

inline void validate(const Scenario& sc) {
  if (sc.n_followers == 0) throw DomainError("scenario needs >= 1 follower");
  if (!(sc.mpr >= 0.0 && sc.mpr <= 1.0)) {
    throw DomainError("scenario mpr must be in [0,1]");
  }
  if (!(sc.dt > 0.0) || !std::isfinite(sc.dt)) {
    throw DomainError("scenario dt must be > 0");
  }
  if (!(sc.t_f > 0.0) || !std::isfinite(sc.t_f)) {
    throw DomainError("scenario t_f must be > 0");
  }
  const double n = sc.t_f / sc.dt;
  if (std::abs(n - std::round(n)) > 1e-6 * std::max(1.0, n)) {
    throw DomainError("scenario t_f must be a multiple of dt");
  }
  if (!(0.0 <= sc.metric_t1 && sc.metric_t1 < sc.metric_t2 &&
        sc.metric_t2 <= sc.t_f)) {
    throw DomainError("scenario metric window must satisfy 0 <= t1 < t2 <= t_f");
  }
  if (!(sc.min_safe() > 0.0)) {
    throw DomainError("minimum safe spacing must be > 0");
  }
  if (!sc.initial_spacing.empty() && sc.initial_spacing.size() != 1 &&
      sc.initial_spacing.size() != sc.n_followers) {
    throw DomainError("initial_spacing needs 1 or n_followers values");
  }
  for (double s : sc.initial_spacing) {
    if (!(s > 0.0)) throw DomainError("initial spacing must be > 0");
  }
  const auto& c = sc.controller;
  if (c.theta.beta < 0.0 || c.theta.gamma < 0.0) {
    throw DomainError("controller beta and gamma must be >= 0");
  }
  for (const auto& [i, th] : c.per_vehicle) {
    if (th.beta < 0.0 || th.gamma < 0.0) {
      throw DomainError("controller beta and gamma must be >= 0");
    }
  }
  validate(sc.hv_model);
  validate(sc.av_model);
  sc.lead.validate();
}

enum class VehicleKind { kLeader, kHuman, kAutomated };

inline const char* to_string(VehicleKind k) {
  switch (k) {
    case VehicleKind::kLeader:
      return "leader";
    case VehicleKind::kAutomated:
      return "AV";
    case VehicleKind::kHuman:
      break;
  }
  return "HV";
}

/// Positions and speeds of the leader (index 0) and followers 1..N.
struct PlatoonState {
  std::vector<double> x;
  std::vector<double> v;
  std::vector<VehicleKind> kinds;
  std::vector<double> lengths;

  std::size_t size() const { return x.size(); }
  double spacing(std::size_t i) const { return x[i - 1] - x[i] - lengths[i - 1]; }
};

struct VehicleSeries {
  VehicleKind kind = VehicleKind::kHuman;
  std::vector<double> x, v, a, s, dv, u;
};

/// Sampled solution; vehicle 0 is the leader, whose s, dv and u are zero.
struct Trajectory {
  std::vector<double> t;
  std::vector<VehicleSeries> vehicles;
  std::vector<std::size_t> av_indices;
  std::size_t speed_floor_hits = 0;

  std::size_t samples() const { return t.size(); }
};

/// Right-hand side of the platoon ODE. State layout: x_0..x_N, v_1..v_N; the
/// leader speed is imposed by the lead profile.
class Platoon {
 public:
  struct FollowerEval {
    double accel = 0.0;
    double control = 0.0;
  };

  explicit Platoon(const Scenario& sc)
      : sc_(sc), n_(sc.n_followers), av_(sc.av_indices()) {
    kinds_.assign(n_ + 1, VehicleKind::kHuman);
    kinds_[0] = VehicleKind::kLeader;
    for (std::size_t i : av_) kinds_[i] = VehicleKind::kAutomated;
    lengths_.resize(n_ + 1);
    for (std::size_t i = 0; i <= n_; ++i) {
      lengths_[i] = kinds_[i] == VehicleKind::kAutomated ? sc.av_model.length
                                                         : sc.hv_model.length;
    }
    trc_ = sc.controller.trc;
    trc_.v_star = sc.controller.v_star.value_or(sc.lead.initial_speed());
  }

  const Scenario& scenario() const { return sc_; }
  std::size_t followers() const { return n_; }
  std::size_t dim() const { return 2 * n_ + 1; }
  const std::vector<std::size_t>& av_indices() const { return av_; }
  const std::vector<VehicleKind>& kinds() const { return kinds_; }
  const std::vector<double>& lengths() const { return lengths_; }
  bool is_av(std::size_t i) const { return kinds_[i] == VehicleKind::kAutomated; }

  static double x(std::span<const double> y, std::size_t i) { return y[i]; }
  double v(std::span<const double> y, std::size_t i, double t) const {
    return i == 0 ? lead_speed(t, sc_.lead, sc_.t_f) : y[n_ + i];
  }
  double spacing(std::span<const double> y, std::size_t i) const {
    return y[i - 1] - y[i] - lengths_[i - 1];
  }

  /// Car-following input of follower i. The speed is floored at zero.
  CarFollowingInput input(std::span<const double> y, std::size_t i,
                          double t) const {
    const double vi = std::max(0.0, v(y, i, t));
    const double vp = std::max(0.0, v(y, i - 1, t));
    return {spacing(y, i), vp - vi, vi};
  }

  FollowerEval evaluate(std::span<const double> y, std::size_t i,
                        double t) const {
    const CarFollowingInput in = input(y, i, t);
    if (!std::isfinite(in.spacing) || !std::isfinite(in.speed) ||
        !std::isfinite(in.relative_speed)) {
      throw NumericalError(i, t, "non-finite state");
    }
    if (in.spacing <= 0.0) {
      throw NumericalError(i, t,
                           detail::concat("collision, spacing ", in.spacing));
    }
    FollowerEval out;
    if (!is_av(i)) {
      out.accel = idm_accel(in, sc_.hv_model);
    } else {
      out.control = control(in, i, std::max(0.0, v(y, i - 1, t)));
      out.accel = ovrv_accel(in, sc_.av_model) + out.control;
    }
    if (!std::isfinite(out.accel)) {
      throw NumericalError(i, t, "non-finite acceleration");
    }
    return out;
  }

  double control(const CarFollowingInput& in, std::size_t i,
                 double v_prev) const {
    const auto& c = sc_.controller;
    switch (c.kind) {
      case ControllerKind::kNone:
        return 0.0;
      case ControllerKind::kTsTrc:
        return ts_trc_input(in.spacing, in.relative_speed, v_prev, trc_);
      case ControllerKind::kTsOps:
        break;
    }
    return additive_input(in.spacing, in.relative_speed, c.theta_for(i), c.law);
  }

  void derivative(double t, std::span<const double> y,
                  std::span<double> dy) const {
    dy[0] = lead_speed(t, sc_.lead, sc_.t_f);
    for (std::size_t i = 1; i <= n_; ++i) {
      dy[i] = y[n_ + i];
      dy[n_ + i] = evaluate(y, i, t).accel;
    }
  }

  std::vector<double> initial_state() const {
    std::vector<double> y(dim(), 0.0);
    const double v0 = sc_.lead.initial_speed();
    for (std::size_t i = 1; i <= n_; ++i) {
      y[i] = y[i - 1] - lengths_[i - 1] - initial_spacing(i);
      y[n_ + i] = v0;
    }
    return y;
  }

  double initial_spacing(std::size_t i) const {
    const auto& init = sc_.initial_spacing;
    if (init.size() == 1) return init.front();
    if (init.size() == n_) return init[i - 1];
    const double v0 = sc_.lead.initial_speed();
    return is_av(i) ? equilibrium_spacing(sc_.av_model, v0)
                    : equilibrium_spacing(sc_.hv_model, v0);
  }

  /// Clamps negative follower speeds to zero; returns how many were clamped.
  std::size_t apply_speed_floor(std::span<double> y) const {
    std::size_t hits = 0;
    for (std::size_t i = 1; i <= n_; ++i) {
      if (y[n_ + i] < 0.0) {
        y[n_ + i] = 0.0;
        ++hits;
      }
    }
    return hits;
  }

  PlatoonState unpack(std::span<const double> y, double t) const {
    PlatoonState st;
    st.kinds = kinds_;
    st.lengths = lengths_;
    st.x.assign(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(n_ + 1));
    st.v.resize(n_ + 1);
    for (std::size_t i = 0; i <= n_; ++i) st.v[i] = v(y, i, t);
    return st;
  }

  std::vector<double> pack(const PlatoonState& st) const {
    if (st.x.size() != n_ + 1 || st.v.size() != n_ + 1) {
      throw DomainError("platoon state size does not match the scenario");
    }
    std::vector<double> y(dim());
    for (std::size_t i = 0; i <= n_; ++i) y[i] = st.x[i];
    for (std::size_t i = 1; i <= n_; ++i) y[n_ + i] = st.v[i];
    return y;
  }

 private:
  const Scenario& sc_;
  std::size_t n_;
  std::vector<std::size_t> av_;
  std::vector<VehicleKind> kinds_;
  std::vector<double> lengths_;
  TsTrcParams trc_;
};

/// Extra states integrated alongside the platoon (e.g. sensitivities).
struct NoExtension {
  std::size_t dim(const Platoon&) const { return 0; }
  void initialize(const Platoon&, std::span<double>) {}
  void derivative(double, const Platoon&, std::span<const double>,
                  std::span<const double>, std::span<double>) {}
  void record(std::size_t, double, const Platoon&, std::span<const double>,
              std::span<const double>) {}
};

namespace detail {

inline void record_sample(const Platoon& platoon, std::span<const double> y,
                          double t, Trajectory& traj) {
  const std::size_t n = platoon.followers();
  traj.t.push_back(t);
  auto& lead = traj.vehicles[0];
  lead.x.push_back(y[0]);
  lead.v.push_back(platoon.v(y, 0, t));
  lead.a.push_back(platoon.scenario().lead.slope(t));
  lead.s.push_back(0.0);
  lead.dv.push_back(0.0);
  lead.u.push_back(0.0);
  for (std::size_t i = 1; i <= n; ++i) {
    const auto eval = platoon.evaluate(y, i, t);
    auto& ser = traj.vehicles[i];
    ser.x.push_back(y[i]);
    ser.v.push_back(y[n + i]);
    ser.a.push_back(eval.accel);
    ser.s.push_back(platoon.spacing(y, i));
    ser.dv.push_back(platoon.v(y, i - 1, t) - y[n + i]);
    ser.u.push_back(eval.control);
  }
}

}  // namespace detail

/// Integrates the platoon together with extension states over [0, t_f].
template <typename Extension>
Trajectory simulate_with(const Scenario& sc, Extension& ext) {
  validate(sc);
  const Platoon platoon(sc);
  const std::size_t base = platoon.dim();
  const std::size_t extra = ext.dim(platoon);
  std::vector<double> y(base + extra, 0.0);
  {
    const auto init = platoon.initial_state();
    std::copy(init.begin(), init.end(), y.begin());
  }
  ext.initialize(platoon, std::span<double>(y).subspan(base));

  auto rhs = [&](double t, std::span<const double> s, std::span<double> ds) {
    platoon.derivative(t, s.first(base), ds.first(base));
    ext.derivative(t, platoon, s.first(base), s.subspan(base),
                   ds.subspan(base));
  };

  Trajectory traj;
  traj.av_indices = platoon.av_indices();
  traj.vehicles.resize(sc.n_followers + 1);
  for (std::size_t i = 0; i <= sc.n_followers; ++i) {
    traj.vehicles[i].kind = platoon.kinds()[i];
  }
  const std::size_t steps = sc.steps();
  traj.t.reserve(steps + 1);
  for (auto& ser : traj.vehicles) {
    for (auto* vec : {&ser.x, &ser.v, &ser.a, &ser.s, &ser.dv, &ser.u}) {
      vec->reserve(steps + 1);
    }
  }

  FixedStepIntegrator integrator(sc.integrator, y.size());
  const std::span<const double> all(y);
  detail::record_sample(platoon, all.first(base), 0.0, traj);
  ext.record(0, 0.0, platoon, all.first(base), all.subspan(base));
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * sc.dt;
    const double t_next = static_cast<double>(k + 1) * sc.dt;
    integrator.step(rhs, t, sc.dt, std::span<double>(y));
    traj.speed_floor_hits +=
        platoon.apply_speed_floor(std::span<double>(y).first(base));
    detail::record_sample(platoon, all.first(base), t_next, traj);
    ext.record(k + 1, t_next, platoon, all.first(base), all.subspan(base));
  }
  return traj;
}

inline Trajectory simulate(const Scenario& sc) {
  NoExtension none;
  return simulate_with(sc, none);
}

/// Advances a platoon state by one dt with the scenario's integrator.
inline PlatoonState step(const PlatoonState& state, double t,
                         const Scenario& sc) {
  validate(sc);
  const Platoon platoon(sc);
  auto y = platoon.pack(state);
  FixedStepIntegrator integrator(sc.integrator, y.size());
  auto rhs = [&](double tt, std::span<const double> s, std::span<double> ds) {
    platoon.derivative(tt, s, ds);
  };
  integrator.step(rhs, t, sc.dt, std::span<double>(y));
  platoon.apply_speed_floor(y);
  return platoon.unpack(y, t + sc.dt);
}

/// Initial platoon state of a scenario.
inline PlatoonState initial_state(const Scenario& sc) {
  validate(sc);
  const Platoon platoon(sc);
  return platoon.unpack(platoon.initial_state(), 0.0);
}

struct SafetyViolation {
  std::size_t vehicle = 0;
  double time = 0.0;
  double spacing = 0.0;
};

/// Every (follower, sample) whose spacing is below min_safe.
inline std::vector<SafetyViolation> check_safety(const Trajectory& traj,
                                                 double min_safe) {
  std::vector<SafetyViolation> out;
  for (std::size_t i = 1; i < traj.vehicles.size(); ++i) {
    const auto& s = traj.vehicles[i].s;
    for (std::size_t k = 0; k < s.size(); ++k) {
      if (s[k] < min_safe) out.push_back({i, traj.t[k], s[k]});
    }
  }
  return out;
}

/// Spacing the AV would keep if it tracked its virtual speed exactly:
/// s(0) - integral of u.
inline std::vector<double> virtual_spacing(const Trajectory& traj,
                                           std::size_t vehicle) {
  const auto& ser = traj.vehicles.at(vehicle);
  std::vector<double> out(traj.samples());
  if (out.empty()) return out;
  out[0] = ser.s[0];
  for (std::size_t k = 1; k < out.size(); ++k) {
    out[k] = out[k - 1] -
             0.5 * (traj.t[k] - traj.t[k - 1]) * (ser.u[k] + ser.u[k - 1]);
  }
  return out;
}

/// Beta ceiling for a scenario's AVs.
inline double scenario_beta_max(const Scenario& sc) {
  double s_init = 0.0;
  if (sc.controller.beta_bound_spacing) {
    s_init = *sc.controller.beta_bound_spacing;
  } else {
    const Platoon platoon(sc);
    const auto& av = platoon.av_indices();
    if (av.empty()) {
      s_init = equilibrium_spacing(sc.av_model, sc.lead.initial_speed());
    } else {
      s_init = std::numeric_limits<double>::infinity();
      for (std::size_t i : av) {
        s_init = std::min(s_init, platoon.initial_spacing(i));
      }
    }
  }
  return beta_upper_bound(s_init, sc.min_safe(), sc.t_f, sc.controller.law);
}

/// CSV with header t,vehicle,kind,x,v,a,s,dv,u; one row per (t, vehicle).
inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  os << "t,vehicle,kind,x,v,a,s,dv,u\n";
  char buf[256];
  for (std::size_t k = 0; k < traj.samples(); ++k) {
    for (std::size_t i = 0; i < traj.vehicles.size(); ++i) {
      const auto& s = traj.vehicles[i];
      std::snprintf(buf, sizeof buf, "%.6f,%zu,%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n",
                    traj.t[k], i, to_string(s.kind), s.x[k], s.v[k], s.a[k],
                    s.s[k], s.dv[k], s.u[k]);
      os << buf;
    }
  }
}

inline void write_safety_csv(std::ostream& os,
                             const std::vector<SafetyViolation>& violations) {
  os << "vehicle,t,s\n";
  char buf[128];
  for (const auto& v : violations) {
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f\n", v.vehicle, v.time,
                  v.spacing);
    os << buf;
  }
}

}  // namespace tsops
