#pragma once

// Mobility and energy metrics over a time window: average speed variation
// (ASV) and VT-Micro fuel consumption.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "tsops/errors.hpp"
#include "tsops/simulator.hpp"

namespace tsops {

/// Unit convention of a VT-Micro coefficient table.
enum class FuelUnits {
  kKmhLitrePerSecond,  // v in km/h, a in km/h/s, rate in L/s
  kSiMillilitrePerSecond,  // v in m/s, a in m/s^2, rate in ml/s
};

inline const char* to_string(FuelUnits u) {
  return u == FuelUnits::kSiMillilitrePerSecond ? "si-ml/s" : "kmh-L/s";
}

/// ln(rate) = sum_ij K[i][j] v^i a^j, with K = accel for a >= 0 and decel
/// otherwise. Row i is the speed power, column j the acceleration power.
struct FuelCoefficients {
  using Matrix = std::array<std::array<double, 4>, 4>;
  Matrix accel{};
  Matrix decel{};
  FuelUnits units = FuelUnits::kKmhLitrePerSecond;

  bool operator==(const FuelCoefficients&) const = default;
};

/// Composite light-duty vehicle fuel table of the VT-Micro model (Ahn,
/// Rakha, Trani & Van Aerde, J. Transp. Eng. 128(2), 2002).
inline FuelCoefficients default_fuel_coefficients() {
  FuelCoefficients c;
  c.units = FuelUnits::kKmhLitrePerSecond;
  c.accel = {{{-7.73452, 0.22946, -0.00561, 9.77e-05},
              {0.02799, 0.0068, -7.72e-04, 8.38e-06},
              {-2.23e-04, -4.40e-05, 7.90e-07, 8.17e-07},
              {1.09e-06, 4.80e-08, 3.27e-08, -7.79e-09}}};
  c.decel = {{{-7.73452, -0.01799, -0.00427, 1.88e-04},
              {0.02804, 0.00772, 8.38e-04, 3.39e-05},
              {-2.20e-04, -5.22e-05, -7.44e-06, 2.77e-07},
              {1.08e-06, 2.47e-07, 4.87e-08, 3.79e-10}}};
  return c;
}

/// Reads a coefficient file. Lines starting with '#' are comments. The first
/// non-comment line declares the layout, e.g.
///   vtmicro regimes=accel,decel units=kmh-L/s
/// followed by 8 rows of 4 numbers (the two 4x4 matrices in declared order).
inline FuelCoefficients parse_fuel_coefficients(std::istream& is) {
  FuelCoefficients c;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  bool accel_first = true;
  std::vector<double> values;
  while (std::getline(is, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    if (!header_seen) {
      std::string tag, regimes, units;
      ls >> tag >> regimes >> units;
      if (tag != "vtmicro") {
        throw ConfigError("fuel table must start with a 'vtmicro' header",
                          line_no);
      }
      if (regimes == "regimes=accel,decel") {
        accel_first = true;
      } else if (regimes == "regimes=decel,accel") {
        accel_first = false;
      } else {
        throw ConfigError("unknown regime order '" + regimes + "'", line_no,
                          "regimes");
      }
      if (units == "units=kmh-L/s") {
        c.units = FuelUnits::kKmhLitrePerSecond;
      } else if (units == "units=si-ml/s") {
        c.units = FuelUnits::kSiMillilitrePerSecond;
      } else {
        throw ConfigError("unknown unit convention '" + units + "'", line_no,
                          "units");
      }
      header_seen = true;
      continue;
    }
    std::size_t in_row = 0;
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t used = 0;
        const double v = std::stod(tok, &used);
        if (used != tok.size() || !std::isfinite(v)) throw std::invalid_argument(tok);
        values.push_back(v);
      } catch (const std::exception&) {
        throw ConfigError("bad coefficient '" + tok + "'", line_no);
      }
      ++in_row;
    }
    if (in_row != 4) {
      throw ConfigError("each coefficient row needs 4 values", line_no);
    }
  }
  if (!header_seen) throw ConfigError("fuel table is empty");
  if (values.size() != 32) {
    throw ConfigError(detail::concat("fuel table needs 8 rows of 4, got ",
                                     values.size(), " values"));
  }
  auto& m1 = accel_first ? c.accel : c.decel;
  auto& m2 = accel_first ? c.decel : c.accel;
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      m1[i][j] = values[4 * i + j];
      m2[i][j] = values[16 + 4 * i + j];
    }
  }
  return c;
}

inline FuelCoefficients load_fuel_coefficients(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open fuel table '" + path + "'");
  return parse_fuel_coefficients(in);
}

inline void write_fuel_coefficients(std::ostream& os,
                                    const FuelCoefficients& c) {
  os << "vtmicro regimes=accel,decel units=" << to_string(c.units) << "\n";
  char buf[64];
  for (const auto* m : {&c.accel, &c.decel}) {
    for (const auto& row : *m) {
      for (std::size_t j = 0; j < 4; ++j) {
        const auto r = std::to_chars(buf, buf + sizeof buf, row[j]);
        os << (j ? " " : "") << std::string_view(buf, r.ptr);
      }
      os << "\n";
    }
  }
}

struct FuelRate {
  double ml_per_s = 0.0;
  bool saturated = false;
};

inline constexpr double kMaxFuelExponent = 50.0;

// The two regimes disagree at a = 0, so accelerations at round-off level
// (an equilibrium run produces |a| ~ 1e-13) would pick a table at random.
// Anything smaller than this counts as zero and uses the a >= 0 table.
inline constexpr double kZeroAccelTolerance = 1e-9;

/// Instantaneous VT-Micro fuel rate in ml/s.
inline FuelRate fuel_rate(double v, double a, const FuelCoefficients& c) {
  if (!std::isfinite(v) || !std::isfinite(a)) {
    throw DomainError("fuel_rate: non-finite speed or acceleration");
  }
  if (v < 0.0) throw DomainError("fuel_rate: speed must be >= 0");
  const bool kmh = c.units == FuelUnits::kKmhLitrePerSecond;
  const double vs = kmh ? v * 3.6 : v;
  const double as = kmh ? a * 3.6 : a;
  const auto& k = a >= -kZeroAccelTolerance ? c.accel : c.decel;
  double exponent = 0.0;
  double vp = 1.0;
  for (std::size_t i = 0; i < 4; ++i, vp *= vs) {
    double ap = 1.0;
    for (std::size_t j = 0; j < 4; ++j, ap *= as) {
      exponent += k[i][j] * vp * ap;
    }
  }
  FuelRate out;
  if (!(exponent <= kMaxFuelExponent)) {
    out.saturated = true;
    exponent = kMaxFuelExponent;
  }
  out.ml_per_s = std::exp(exponent) * (kmh ? 1000.0 : 1.0);
  return out;
}

namespace detail {

// Trapezoidal integral of samples f over [t1, t2]; partial end intervals are
// handled by linear interpolation.
inline double integrate_window(const std::vector<double>& t,
                               const std::vector<double>& f, double t1,
                               double t2) {
  if (t.empty() || t.size() != f.size()) {
    throw DomainError("integrate_window: sample size mismatch");
  }
  constexpr double kSlack = 1e-9;
  if (!(t1 <= t2) || t1 < t.front() - kSlack || t2 > t.back() + kSlack) {
    throw DomainError(detail::concat("window [", t1, ", ", t2,
                                     "] outside trajectory span [", t.front(),
                                     ", ", t.back(), "]"));
  }
  if (t1 == t2) return 0.0;
  double total = 0.0;
  for (std::size_t k = 1; k < t.size(); ++k) {
    const double a = std::max(t[k - 1], t1);
    const double b = std::min(t[k], t2);
    if (b <= a) continue;
    const double h = t[k] - t[k - 1];
    auto at = [&](double x) {
      return f[k - 1] + (f[k] - f[k - 1]) * (x - t[k - 1]) / h;
    };
    total += 0.5 * (b - a) * (at(a) + at(b));
  }
  return total;
}

}  // namespace detail

/// Average speed variation (1/(t2-t1)) * integral |v - v*| dt.
inline double asv(const Trajectory& traj, std::size_t vehicle, double v_star,
                  double t1, double t2) {
  if (!(t2 > t1)) throw DomainError("asv: window must have t2 > t1");
  const auto& v = traj.vehicles.at(vehicle).v;
  std::vector<double> dev(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) dev[k] = std::abs(v[k] - v_star);
  return detail::integrate_window(traj.t, dev, t1, t2) / (t2 - t1);
}

struct FuelTotal {
  double ml = 0.0;
  bool saturated = false;
};

inline FuelTotal total_fuel(const Trajectory& traj, std::size_t vehicle,
                            double t1, double t2, const FuelCoefficients& c) {
  const auto& ser = traj.vehicles.at(vehicle);
  std::vector<double> rate(ser.v.size());
  FuelTotal out;
  for (std::size_t k = 0; k < rate.size(); ++k) {
    const auto r = fuel_rate(std::max(0.0, ser.v[k]), ser.a[k], c);
    rate[k] = r.ml_per_s;
    out.saturated = out.saturated || r.saturated;
  }
  out.ml = detail::integrate_window(traj.t, rate, t1, t2);
  return out;
}

struct MetricsReport {
  std::vector<double> asv;  // per follower, index 0 is follower 1
  std::vector<double> fc;   // ml, per follower
  double platoon_asv = 0.0;
  double platoon_fc = 0.0;  // platoon-average ml
  double t1 = 0.0, t2 = 0.0;
  double v_star = 0.0;
  bool fuel_saturated = false;
};

/// ASV and fuel of every follower (the leader is excluded) over the
/// scenario's metric window, plus platoon averages.
inline MetricsReport summarize(const Trajectory& traj, const Scenario& sc,
                               const FuelCoefficients& c) {
  MetricsReport r;
  r.t1 = sc.metric_t1;
  r.t2 = sc.metric_t2;
  r.v_star = sc.desired_speed();
  const std::size_t n = traj.vehicles.size() - 1;
  if (n == 0) throw DomainError("summarize: trajectory has no followers");
  for (std::size_t i = 1; i <= n; ++i) {
    r.asv.push_back(asv(traj, i, r.v_star, r.t1, r.t2));
    const auto f = total_fuel(traj, i, r.t1, r.t2, c);
    r.fc.push_back(f.ml);
    r.fuel_saturated = r.fuel_saturated || f.saturated;
    r.platoon_asv += r.asv.back();
    r.platoon_fc += f.ml;
  }
  r.platoon_asv /= static_cast<double>(n);
  r.platoon_fc /= static_cast<double>(n);
  return r;
}

/// CSV `vehicle,asv,fc` with a final `platoon` aggregate row.
inline void write_metrics_csv(std::ostream& os, const MetricsReport& r) {
  os << "vehicle,asv,fc\n";
  char buf[128];
  for (std::size_t i = 0; i < r.asv.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f\n", i + 1, r.asv[i], r.fc[i]);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "platoon,%.6f,%.6f\n", r.platoon_asv,
                r.platoon_fc);
  os << buf;
}

}  // namespace tsops
