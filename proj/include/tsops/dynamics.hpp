#pragma once

// Car-following acceleration laws: IDM for human drivers and OVRV for
// automated vehicles, plus their equilibria and rational-driving checks.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <type_traits>
#include <variant>

#include "tsops/errors.hpp"

namespace tsops {

/// Local traffic state seen by one follower.
struct CarFollowingInput {
  double spacing = 0.0;         // s, bumper-to-bumper gap [m]
  double relative_speed = 0.0;  // dv = v_prev - v_self [m/s]
  double speed = 0.0;           // v [m/s]
};

struct IdmParams {
  double a = 0.6;       // max acceleration [m/s^2]
  double b = 2.5;       // comfortable deceleration [m/s^2]
  double v0 = 35.0;     // free speed [m/s]
  double s0 = 2.0;      // jam spacing [m]
  double T = 1.5;       // time headway [s]
  double delta = 4.0;   // acceleration exponent
  double length = 5.0;  // vehicle length [m]

  bool operator==(const IdmParams&) const = default;
};

struct OvrvParams {
  double k1 = 0.02;     // spacing gain [1/s^2]
  double k2 = 0.13;     // relative speed gain [1/s]
  double eta = 21.51;   // standstill spacing term [m]
  double tau = 1.71;    // desired time gap [s]
  double length = 5.0;  // vehicle length [m]

  bool operator==(const OvrvParams&) const = default;
};

/// IDM human drivers with mild stop-and-go oscillation.
inline constexpr IdmParams kIdmLowOscillation{0.6, 2.5, 35.0, 2.0, 1.5, 4.0,
                                              5.0};
/// Calibrated IDM human drivers with strong stop-and-go oscillation.
inline constexpr IdmParams kIdmHighOscillation{0.6, 5.2, 44.1, 6.3, 2.2, 15.5,
                                               5.0};
inline constexpr OvrvParams kOvrvDefault{0.02, 0.13, 21.51, 1.71, 5.0};

using ModelKind = std::variant<IdmParams, OvrvParams>;

inline double vehicle_length(const ModelKind& model) {
  return std::visit([](const auto& p) { return p.length; }, model);
}

inline void validate(const IdmParams& p) {
  for (double x : {p.a, p.b, p.v0, p.s0, p.T, p.delta, p.length}) {
    if (!(std::isfinite(x) && x > 0.0)) {
      throw DomainError("IDM parameters must be finite and strictly positive");
    }
  }
}

inline void validate(const OvrvParams& p) {
  if (!(std::isfinite(p.k1) && std::isfinite(p.k2) && std::isfinite(p.eta) &&
        std::isfinite(p.tau) && std::isfinite(p.length))) {
    throw DomainError("OVRV parameters must be finite");
  }
  if (p.k1 <= 0.0 || p.k2 <= 0.0 || p.tau <= 0.0) {
    throw DomainError("OVRV requires k1, k2, tau > 0");
  }
  if (p.eta < 0.0) throw DomainError("OVRV requires eta >= 0");
  if (p.length <= 0.0) throw DomainError("OVRV vehicle length must be > 0");
}

namespace detail {

inline void require_finite(const CarFollowingInput& in, const char* who) {
  if (!std::isfinite(in.spacing) || !std::isfinite(in.relative_speed) ||
      !std::isfinite(in.speed)) {
    throw DomainError(detail::concat(who, ": non-finite input (s=", in.spacing,
                             ", dv=", in.relative_speed, ", v=", in.speed,
                             ")"));
  }
}

inline double idm_interaction_term(const CarFollowingInput& in,
                                   const IdmParams& p) {
  return in.speed * p.T -
         in.speed * in.relative_speed / (2.0 * std::sqrt(p.a * p.b));
}

}  // namespace detail

/// Desired dynamic spacing s*(v, dv) of the IDM, including the max{0, .}
/// clamp on the interaction term.
inline double idm_desired_spacing(double speed, double relative_speed,
                                  const IdmParams& p) {
  return p.s0 + std::max(0.0, detail::idm_interaction_term(
                                  {1.0, relative_speed, speed}, p));
}

inline double idm_accel(const CarFollowingInput& in, const IdmParams& p) {
  detail::require_finite(in, "idm_accel");
  if (in.spacing <= 0.0) {
    throw DomainError(detail::concat("idm_accel: spacing must be > 0, got ",
                             in.spacing));
  }
  if (in.speed < 0.0) {
    throw DomainError(detail::concat("idm_accel: speed must be >= 0, got ", in.speed));
  }
  const double s_star = idm_desired_spacing(in.speed, in.relative_speed, p);
  const double ratio = s_star / in.spacing;
  return p.a * (1.0 - std::pow(in.speed / p.v0, p.delta) - ratio * ratio);
}

inline double ovrv_accel(const CarFollowingInput& in, const OvrvParams& p) {
  detail::require_finite(in, "ovrv_accel");
  return p.k1 * (in.spacing - p.eta - p.tau * in.speed) +
         p.k2 * in.relative_speed;
}

inline double accel(const CarFollowingInput& in, const ModelKind& model) {
  return std::visit(
      [&](const auto& p) -> double {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, IdmParams>) {
          return idm_accel(in, p);
        } else {
          return ovrv_accel(in, p);
        }
      },
      model);
}

/// Analytic partial derivatives of a car-following law.
struct AccelPartials {
  double d_spacing = 0.0;
  double d_relative_speed = 0.0;
  double d_speed = 0.0;
};

// At the kink of the s* clamp the one-sided derivative from the clamped side
// is returned.
inline AccelPartials idm_partials(const CarFollowingInput& in,
                                  const IdmParams& p) {
  detail::require_finite(in, "idm_partials");
  if (in.spacing <= 0.0) throw DomainError("idm_partials: spacing must be > 0");
  const double root = 2.0 * std::sqrt(p.a * p.b);
  const bool active = detail::idm_interaction_term(in, p) > 0.0;
  const double s_star = idm_desired_spacing(in.speed, in.relative_speed, p);
  const double ds_dv = active ? p.T - in.relative_speed / root : 0.0;
  const double ds_ddv = active ? -in.speed / root : 0.0;
  const double s = in.spacing;
  const double free_term =
      in.speed > 0.0
          ? p.a * p.delta * std::pow(in.speed / p.v0, p.delta - 1.0) / p.v0
          : 0.0;
  AccelPartials out;
  out.d_spacing = 2.0 * p.a * s_star * s_star / (s * s * s);
  out.d_relative_speed = -2.0 * p.a * s_star / (s * s) * ds_ddv;
  out.d_speed = -free_term - 2.0 * p.a * s_star / (s * s) * ds_dv;
  return out;
}

inline AccelPartials ovrv_partials(const OvrvParams& p) {
  return {p.k1, p.k2, -p.k1 * p.tau};
}

inline AccelPartials accel_partials(const CarFollowingInput& in,
                                    const ModelKind& model) {
  if (const auto* idm = std::get_if<IdmParams>(&model)) {
    return idm_partials(in, *idm);
  }
  return ovrv_partials(std::get<OvrvParams>(model));
}

/// Free speed of the model (infinite for OVRV).
inline double free_speed(const ModelKind& model) {
  if (const auto* idm = std::get_if<IdmParams>(&model)) return idm->v0;
  return std::numeric_limits<double>::infinity();
}

/// Spacing at which accel(s, 0, v) vanishes.
inline double equilibrium_spacing(const ModelKind& model, double v) {
  if (!std::isfinite(v) || v < 0.0) {
    throw DomainError(detail::concat("equilibrium_spacing: speed must be >= 0, got ",
                             v));
  }
  if (const auto* ovrv = std::get_if<OvrvParams>(&model)) {
    return ovrv->eta + ovrv->tau * v;
  }
  const auto& p = std::get<IdmParams>(model);
  if (v >= p.v0) {
    throw NoEquilibriumError(detail::concat("IDM has no equilibrium at v=", v,
                                    " >= v0=", p.v0));
  }
  const double closed =
      (p.s0 + v * p.T) / std::sqrt(1.0 - std::pow(v / p.v0, p.delta));
  if (std::isfinite(closed) &&
      std::abs(idm_accel({closed, 0.0, v}, p)) <= 1e-9) {
    return closed;
  }

  // Closed form lost precision; accel is increasing in s, so bisect.
  double lo = p.s0 + v * p.T;  // accel(lo) <= 0
  double hi = std::max(2.0 * lo, 1.0);
  while (idm_accel({hi, 0.0, v}, p) < 0.0) {
    hi *= 2.0;
    if (!std::isfinite(hi)) {
      throw NoEquilibriumError(detail::concat("IDM equilibrium diverges at v=", v));
    }
  }
  for (int i = 0; i < 200 && hi - lo > 1e-13 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (idm_accel({mid, 0.0, v}, p) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Axis-aligned sampling box over (s, dv, v).
struct SamplingGrid {
  double s_min = 5.0, s_max = 100.0;
  double dv_min = -5.0, dv_max = 5.0;
  double v_min = 0.0, v_max = 30.0;
  std::size_t n_s = 20, n_dv = 21, n_v = 16;

  double s_at(std::size_t i) const { return lerp(s_min, s_max, i, n_s); }
  double dv_at(std::size_t i) const { return lerp(dv_min, dv_max, i, n_dv); }
  double v_at(std::size_t i) const { return lerp(v_min, v_max, i, n_v); }

 private:
  static double lerp(double lo, double hi, std::size_t i, std::size_t n) {
    return n <= 1 ? lo
                  : lo + (hi - lo) * static_cast<double>(i) /
                             static_cast<double>(n - 1);
  }
};

struct RdcViolation {
  std::string condition;  // "da/ds >= 0", ...
  CarFollowingInput at;
  double derivative = 0.0;
};

struct RdcReport {
  bool pass = true;
  std::size_t points_checked = 0;
  std::optional<RdcViolation> first_violation;
};

/// Checks the rational driving constraints da/ds >= 0, da/ddv >= 0 and
/// da/dv <= 0 with central differences at every grid point. Speeds are
/// differenced one-sidedly where a central stencil would go negative.
inline RdcReport rdc_check(const ModelKind& model, const SamplingGrid& grid,
                           double tolerance = 1e-9) {
  RdcReport report;
  auto f = [&](double s, double dv, double v) {
    return accel({s, dv, v}, model);
  };
  for (std::size_t iv = 0; iv < grid.n_v; ++iv) {
    for (std::size_t is = 0; is < grid.n_s; ++is) {
      for (std::size_t id = 0; id < grid.n_dv; ++id) {
        const double s = grid.s_at(is), dv = grid.dv_at(id),
                     v = grid.v_at(iv);
        const double hs = 1e-6 * std::max(1.0, s);
        const double hd = 1e-6 * std::max(1.0, std::abs(dv));
        const double hv = 1e-6 * std::max(1.0, v);
        const double da_ds = (f(s + hs, dv, v) - f(s - hs, dv, v)) / (2 * hs);
        const double da_ddv =
            (f(s, dv + hd, v) - f(s, dv - hd, v)) / (2 * hd);
        const double da_dv = v - hv >= 0.0
                                 ? (f(s, dv, v + hv) - f(s, dv, v - hv)) /
                                       (2 * hv)
                                 : (f(s, dv, v + hv) - f(s, dv, v)) / hv;
        ++report.points_checked;
        const char* failed = nullptr;
        double value = 0.0;
        if (da_ds < -tolerance) {
          failed = "da/ds >= 0";
          value = da_ds;
        } else if (da_ddv < -tolerance) {
          failed = "da/ddv >= 0";
          value = da_ddv;
        } else if (da_dv > tolerance) {
          failed = "da/dv <= 0";
          value = da_dv;
        }
        if (failed != nullptr) {
          report.pass = false;
          report.first_violation = RdcViolation{failed, {s, dv, v}, value};
          return report;
        }
      }
    }
  }
  return report;
}

}  // namespace tsops
