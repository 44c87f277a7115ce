#pragma once

// Independent reference computations for the tests. Nothing here calls the
// library's model code; formulas are re-derived from their definitions so a
// shared bug cannot make both sides agree.

#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <vector>

namespace oracle {

struct Idm {
  double a, b, v0, s0, T, delta;
};

inline double idm(const Idm& p, double s, double dv, double v) {
  const double star =
      p.s0 + std::max(0.0, v * p.T - v * dv / (2.0 * std::sqrt(p.a * p.b)));
  return p.a * (1.0 - std::pow(v / p.v0, p.delta) - (star / s) * (star / s));
}

/// Root of f on [lo, hi] by plain bisection (f(lo) and f(hi) differ in sign).
inline double bisect(const std::function<double(double)>& f, double lo,
                     double hi, int iterations = 200) {
  double flo = f(lo);
  for (int k = 0; k < iterations; ++k) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if ((fm < 0.0) == (flo < 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

/// Equilibrium IDM gap at speed v: the s solving idm(s, 0, v) = 0.
inline double idm_equilibrium(const Idm& p, double v) {
  return bisect([&](double s) { return idm(p, s, 0.0, v); }, 1e-3, 1e4);
}

/// Trapezoidal integral of uniformly or non-uniformly sampled data.
inline double trapezoid(const std::vector<double>& t,
                        const std::vector<double>& f) {
  double total = 0.0;
  for (std::size_t k = 1; k < t.size(); ++k) {
    total += 0.5 * (t[k] - t[k - 1]) * (f[k] + f[k - 1]);
  }
  return total;
}

/// Cubic Hermite interpolant of samples (t_k, y_k, y'_k) at time x.
inline double hermite(const std::vector<double>& t, const std::vector<double>& y,
                      const std::vector<double>& dy, double x) {
  std::size_t k = 0;
  while (k + 2 < t.size() && x > t[k + 1]) ++k;
  const double h = t[k + 1] - t[k];
  const double u = (x - t[k]) / h;
  const double u2 = u * u, u3 = u2 * u;
  return (2 * u3 - 3 * u2 + 1) * y[k] + (u3 - 2 * u2 + u) * h * dy[k] +
         (-2 * u3 + 3 * u2) * y[k + 1] + (u3 - u2) * h * dy[k + 1];
}

/// Objective of a single AV whose spacing and predecessor speed are frozen
/// to recorded signals; only the AV's own speed ODE is re-solved (RK4 on the
/// recording grid, signals Hermite-interpolated at the half steps).
struct ReplayedSpacing {
  std::vector<double> t;
  std::vector<double> s, ds;        // spacing and its rate (= dv)
  std::vector<double> vp, dvp;      // predecessor speed and acceleration
  double v_init = 0.0;
  double k1 = 0.0, k2 = 0.0, eta = 0.0, tau = 0.0;

  double accel(double x, double v, double beta, double gamma) const {
    const double sx = hermite(t, s, ds, x);
    const double vpx = hermite(t, vp, dvp, x);
    const double dv = vpx - v;
    return k1 * (sx - eta - tau * v) + k2 * dv +
           beta * std::atan(gamma * sx * dv);
  }

  double objective(double beta, double gamma) const {
    std::vector<double> gap2(t.size());
    double v = v_init;
    gap2[0] = 0.5 * (v - vp[0]) * (v - vp[0]);
    for (std::size_t k = 0; k + 1 < t.size(); ++k) {
      const double h = t[k + 1] - t[k], x = t[k];
      const double a1 = accel(x, v, beta, gamma);
      const double a2 = accel(x + h / 2, v + h / 2 * a1, beta, gamma);
      const double a3 = accel(x + h / 2, v + h / 2 * a2, beta, gamma);
      const double a4 = accel(x + h, v + h * a3, beta, gamma);
      v += h / 6 * (a1 + 2 * a2 + 2 * a3 + a4);
      gap2[k + 1] = 0.5 * (v - vp[k + 1]) * (v - vp[k + 1]);
    }
    return trapezoid(t, gap2);
  }

  /// Central finite-difference gradient with respect to (beta, gamma).
  std::pair<double, double> gradient(double beta, double gamma,
                                     double h_beta = 1e-5,
                                     double h_gamma = 1e-4) const {
    return {(objective(beta + h_beta, gamma) - objective(beta - h_beta, gamma)) /
                (2 * h_beta),
            (objective(beta, gamma + h_gamma) - objective(beta, gamma - h_gamma)) /
                (2 * h_gamma)};
  }
};

}  // namespace oracle
