#pragma once

// Additive AV controllers. The traffic-smoothing law u = beta * sigma(gamma *
// s * dv) needs only onboard measurements; TS-TRC is the equilibrium-speed
// based baseline it is compared against.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "tsops/errors.hpp"

namespace tsops {

struct ControllerParams {
  double beta = 0.0;   // output scale [m/s^2]
  double gamma = 0.0;  // gain on s * dv [1/(m * m/s)]

  bool operator==(const ControllerParams&) const = default;
};

/// Saturating odd function used inside the additive law.
enum class Sigmoid { kArctan, kTanh, kErf };

inline double sigmoid_value(Sigmoid law, double w) {
  switch (law) {
    case Sigmoid::kTanh:
      return std::tanh(w);
    case Sigmoid::kErf:
      return std::erf(w);
    case Sigmoid::kArctan:
      break;
  }
  return std::atan(w);
}

inline double sigmoid_derivative(Sigmoid law, double w) {
  switch (law) {
    case Sigmoid::kTanh: {
      const double t = std::tanh(w);
      return 1.0 - t * t;
    }
    case Sigmoid::kErf:
      return 2.0 / std::sqrt(std::numbers::pi) * std::exp(-w * w);
    case Sigmoid::kArctan:
      break;
  }
  return 1.0 / (1.0 + w * w);
}

/// sup |sigma|.
inline double sigmoid_supremum(Sigmoid law) {
  return law == Sigmoid::kArctan ? std::numbers::pi / 2.0 : 1.0;
}

inline const char* to_string(Sigmoid law) {
  switch (law) {
    case Sigmoid::kTanh:
      return "tanh";
    case Sigmoid::kErf:
      return "erf";
    case Sigmoid::kArctan:
      break;
  }
  return "arctan";
}

inline std::optional<Sigmoid> parse_sigmoid(const std::string& name) {
  if (name == "arctan") return Sigmoid::kArctan;
  if (name == "tanh") return Sigmoid::kTanh;
  if (name == "erf") return Sigmoid::kErf;
  return std::nullopt;
}

namespace detail {

inline void require_finite_control(double s, double dv, const char* who) {
  if (!std::isfinite(s) || !std::isfinite(dv)) {
    throw DomainError(concat(who, ": non-finite input (s=", s, ", dv=", dv,
                             ")"));
  }
}

}  // namespace detail

/// u = beta * sigma(gamma * s * dv).
inline double additive_input(double s, double dv, const ControllerParams& p,
                             Sigmoid law = Sigmoid::kArctan) {
  detail::require_finite_control(s, dv, "additive_input");
  if (!std::isfinite(p.beta) || !std::isfinite(p.gamma)) {
    throw DomainError("additive_input: non-finite controller parameters");
  }
  return p.beta * sigmoid_value(law, p.gamma * s * dv);
}

/// Speed the controlled AV converges to: the predecessor's speed shifted by
/// the additive input.
inline double virtual_speed(double v_prev, double s, double dv,
                            const ControllerParams& p,
                            Sigmoid law = Sigmoid::kArctan) {
  if (!std::isfinite(v_prev)) {
    throw DomainError("virtual_speed: non-finite predecessor speed");
  }
  return v_prev + additive_input(s, dv, p, law);
}

/// Derivatives of the additive input with respect to its arguments and to
/// theta = (beta, gamma).
struct AdditivePartials {
  double d_spacing = 0.0;
  double d_relative_speed = 0.0;
  double d_beta = 0.0;
  double d_gamma = 0.0;
};

inline AdditivePartials additive_partials(double s, double dv,
                                          const ControllerParams& p,
                                          Sigmoid law = Sigmoid::kArctan) {
  detail::require_finite_control(s, dv, "additive_partials");
  const double w = p.gamma * s * dv;
  const double slope = sigmoid_derivative(law, w);
  AdditivePartials out;
  out.d_spacing = p.beta * slope * p.gamma * dv;
  out.d_relative_speed = p.beta * slope * p.gamma * s;
  out.d_beta = sigmoid_value(law, w);
  out.d_gamma = p.beta * slope * s * dv;
  return out;
}

/// Largest beta for which the virtual spacing cannot fall below min_safe
/// within the horizon: beta * sup|sigma| * t_f <= s(0) - min_safe.
inline double beta_upper_bound(double initial_spacing, double min_safe,
                               double horizon,
                               Sigmoid law = Sigmoid::kArctan) {
  if (!std::isfinite(initial_spacing) || !std::isfinite(min_safe) ||
      !std::isfinite(horizon)) {
    throw DomainError("beta_upper_bound: non-finite input");
  }
  if (horizon <= 0.0) {
    throw DomainError(detail::concat("beta_upper_bound: horizon must be > 0, got ",
                                     horizon));
  }
  if (min_safe <= 0.0) {
    throw DomainError("beta_upper_bound: minimum safe spacing must be > 0");
  }
  if (initial_spacing < min_safe) {
    throw DomainError(detail::concat(
        "beta_upper_bound: initial spacing ", initial_spacing,
        " is below the minimum safe spacing ", min_safe));
  }
  return (initial_spacing - min_safe) / (sigmoid_supremum(law) * horizon);
}

/// Safety envelope of a controlled AV over [0, horizon].
struct SafetyEnvelope {
  double initial_spacing = 0.0;
  double min_safe_spacing = 0.0;
  double horizon = 0.0;
  double alpha = 0.0;  // sup of the additive input, beta * sup|sigma|

  /// s(0) - alpha * t_f >= min_safe.
  bool holds(double slack = 1e-12) const {
    return initial_spacing - alpha * horizon >= min_safe_spacing - slack;
  }
  double worst_case_spacing() const {
    return initial_spacing - alpha * horizon;
  }
};

inline SafetyEnvelope make_envelope(double initial_spacing, double min_safe,
                                    double horizon, double beta,
                                    Sigmoid law = Sigmoid::kArctan) {
  if (!(initial_spacing > min_safe && min_safe > 0.0 && horizon > 0.0)) {
    throw DomainError(
        "make_envelope: requires initial spacing > min safe spacing > 0 and "
        "horizon > 0");
  }
  if (beta < 0.0) throw DomainError("make_envelope: beta must be >= 0");
  return {initial_spacing, min_safe, horizon,
          beta * sigmoid_supremum(law)};
}

struct TsTrcParams {
  double phi1 = 1.0;   // [1/s]
  double phi2 = 0.1;   // [m/s]
  double phi3 = 0.01;  // [1/(m * m/s)]
  double v_star = 21.0;

  bool operator==(const TsTrcParams&) const = default;
};

/// u = phi1 * (dv + phi2 * arctan(phi3 * s * (v* - v_prev))).
inline double ts_trc_input(double s, double dv, double v_prev,
                           const TsTrcParams& p) {
  detail::require_finite_control(s, dv, "ts_trc_input");
  if (!std::isfinite(v_prev)) {
    throw DomainError("ts_trc_input: non-finite predecessor speed");
  }
  return p.phi1 * (dv + p.phi2 * std::atan(p.phi3 * s * (p.v_star - v_prev)));
}

// ---------------------------------------------------------------------------
// Controller class conditions

using AdditiveLaw = std::function<double(double s, double dv)>;

inline AdditiveLaw make_additive_law(const ControllerParams& p,
                                     Sigmoid law = Sigmoid::kArctan) {
  return [p, law](double s, double dv) { return additive_input(s, dv, p, law); };
}

/// Sampling box for the controller condition checks. dv = 0 is always
/// sampled in addition to the regular grid.
struct ControlBox {
  double s_min = 1.0, s_max = 100.0;
  double dv_min = -5.0, dv_max = 5.0;
  std::size_t n_s = 40, n_dv = 40;
};

struct ConditionResult {
  bool pass = true;
  std::string counterexample;
};

struct ControllerConditionReport {
  ConditionResult monotone;      // (i)
  ConditionResult sign;          // (ii)
  ConditionResult smooth;        // (iii)
  ConditionResult bounded;       // (iv)

  bool all_pass() const {
    return monotone.pass && sign.pass && smooth.pass && bounded.pass;
  }
};

namespace detail {

inline std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = n <= 1 ? lo
                    : lo + (hi - lo) * static_cast<double>(i) /
                               static_cast<double>(n - 1);
  }
  return out;
}

inline void fail(ConditionResult& r, std::string what) {
  if (r.pass) {
    r.pass = false;
    r.counterexample = std::move(what);
  }
}

// Largest second difference of u along (s, dv)(t) = (s_c + A sin wt,
// B cos wt), sampled at step h.
inline std::pair<double, double> max_time_differences(const AdditiveLaw& u,
                                                      double s_c, double amp,
                                                      double dv_amp,
                                                      double omega, double h,
                                                      double horizon) {
  const auto n = static_cast<std::size_t>(std::llround(horizon / h));
  std::vector<double> samples(n + 1);
  for (std::size_t k = 0; k <= n; ++k) {
    const double t = static_cast<double>(k) * h;
    samples[k] = u(s_c + amp * std::sin(omega * t), dv_amp * std::cos(omega * t));
  }
  double d1 = 0.0, d2 = 0.0;
  for (std::size_t k = 1; k + 1 <= n; ++k) {
    d1 = std::max(d1, std::abs(samples[k + 1] - samples[k - 1]) / (2 * h));
    d2 = std::max(d2, std::abs(samples[k + 1] - 2 * samples[k] +
                               samples[k - 1]) /
                          (h * h));
  }
  return {d1, d2};
}

}  // namespace detail

/// Numerically checks the four controller-class conditions on a grid:
/// (i) u strictly increasing in dv, and in s along the direction that
/// increases s * dv; (ii) u * dv > 0 for dv != 0 and u = 0 at dv = 0;
/// (iii) first/second time differences along smooth test paths that stay
/// bounded under step refinement; (iv) sup |u| <= alpha_claim.
inline ControllerConditionReport validate_controller_conditions(
    const AdditiveLaw& ctrl, const ControlBox& box, double alpha_claim) {
  ControllerConditionReport report;
  const auto s_grid = detail::linspace(box.s_min, box.s_max, box.n_s);
  auto dv_grid = detail::linspace(box.dv_min, box.dv_max, box.n_dv);
  dv_grid.push_back(0.0);
  std::sort(dv_grid.begin(), dv_grid.end());
  dv_grid.erase(std::unique(dv_grid.begin(), dv_grid.end()), dv_grid.end());

  std::vector<std::vector<double>> u(s_grid.size(),
                                     std::vector<double>(dv_grid.size()));
  for (std::size_t i = 0; i < s_grid.size(); ++i) {
    for (std::size_t j = 0; j < dv_grid.size(); ++j) {
      u[i][j] = ctrl(s_grid[i], dv_grid[j]);
    }
  }

  // (ii) at dv = 0 first: a controller acting without a speed difference is
  // the most basic failure, so it is the one reported.
  const auto zero = static_cast<std::size_t>(
      std::find(dv_grid.begin(), dv_grid.end(), 0.0) - dv_grid.begin());
  for (std::size_t i = 0; i < s_grid.size(); ++i) {
    if (u[i][zero] != 0.0) {
      detail::fail(report.sign, detail::concat("u=", u[i][zero], " at s=",
                                               s_grid[i], ", dv=0"));
    }
  }

  for (std::size_t i = 0; i < s_grid.size(); ++i) {
    for (std::size_t j = 0; j < dv_grid.size(); ++j) {
      const double s = s_grid[i], dv = dv_grid[j], val = u[i][j];
      // (i)
      if (j + 1 < dv_grid.size() && !(u[i][j + 1] > val)) {
        detail::fail(report.monotone,
                     detail::concat("not increasing in dv at s=", s, ", dv=",
                                    dv, "->", dv_grid[j + 1]));
      }
      if (i + 1 < s_grid.size() && dv != 0.0) {
        const double next = u[i + 1][j];
        if (dv > 0.0 ? !(next > val) : !(next < val)) {
          detail::fail(report.monotone,
                       detail::concat("not increasing in s*dv at dv=", dv,
                                      ", s=", s, "->", s_grid[i + 1]));
        }
      }
      // (ii)
      if (dv != 0.0 && !(val * dv > 0.0)) {
        detail::fail(report.sign, detail::concat("u=", val, " at s=", s,
                                                 ", dv=", dv));
      }
      // (iv)
      if (!(std::abs(val) <= alpha_claim + 1e-12)) {
        detail::fail(report.bounded,
                     detail::concat("|u|=", std::abs(val), " > alpha=",
                                    alpha_claim, " at s=", s, ", dv=", dv));
      }
    }
  }

  // (iv) also probes far outside the box, where sigmoids saturate.
  for (double s : {box.s_max, 1e3 * box.s_max, 1e6 * box.s_max}) {
    for (double dv : {-1e3, 1e3}) {
      const double val = ctrl(s, dv);
      if (!(std::abs(val) <= alpha_claim + 1e-12)) {
        detail::fail(report.bounded,
                     detail::concat("|u|=", std::abs(val), " > alpha=",
                                    alpha_claim, " at s=", s, ", dv=", dv));
      }
    }
  }

  // (iii) For a smooth law the sampled first and second differences converge
  // to max|u'| and max|u''| as the step is halved; a jump or kink makes them
  // grow like 1/h or 1/h^2 instead.
  const double s_c = 0.5 * (box.s_min + box.s_max);
  const double amp = 0.25 * (box.s_max - box.s_min);
  const double dv_amp = 0.5 * std::max(std::abs(box.dv_min), std::abs(box.dv_max));
  constexpr int kMaxHalvings = 10;
  constexpr double kSettled = 0.02;
  for (double omega : {0.05, 0.2, 1.0}) {
    const double horizon = 2.0 * std::numbers::pi / omega;
    double h = 0.01 / omega;
    auto [d1, d2] =
        detail::max_time_differences(ctrl, s_c, amp, dv_amp, omega, h, horizon);
    bool settled = false;
    for (int level = 0; level < kMaxHalvings && !settled; ++level) {
      h /= 2;
      const auto [f1, f2] = detail::max_time_differences(ctrl, s_c, amp, dv_amp,
                                                         omega, h, horizon);
      if (!std::isfinite(f1) || !std::isfinite(f2)) break;
      settled = std::abs(f1 - d1) <= kSettled * std::max(d1, 1e-12) &&
                std::abs(f2 - d2) <= kSettled * std::max(d2, 1e-12);
      d1 = f1;
      d2 = f2;
    }
    if (!settled) {
      detail::fail(report.smooth,
                   detail::concat("time differences do not converge under "
                                  "step refinement at omega=",
                                  omega, " (|du/dt| ~ ", d1, ", |d2u/dt2| ~ ",
                                  d2, ")"));
    }
  }
  return report;
}

}  // namespace tsops
