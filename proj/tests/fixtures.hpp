#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "tsops/config.hpp"
#include "tsops/simulator.hpp"

namespace fixtures {

inline tsops::Scenario scenario(const std::string& preset, double mpr) {
  auto sc = tsops::preset(preset).scenario;
  sc.mpr = mpr;
  return sc;
}

/// Hand-built trajectory: speed(i, t) gives vehicle i's speed (0 = leader);
/// positions, spacings and relative speeds follow from it on a uniform grid.
inline tsops::Trajectory synthetic(
    std::size_t followers, double t_end, double dt,
    const std::function<double(std::size_t, double)>& speed,
    double gap = 30.0, double length = 5.0) {
  tsops::Trajectory tr;
  tr.vehicles.resize(followers + 1);
  tr.vehicles[0].kind = tsops::VehicleKind::kLeader;
  const auto n = static_cast<std::size_t>(t_end / dt + 0.5);
  std::vector<double> x(followers + 1);
  for (std::size_t i = 0; i <= followers; ++i) {
    x[i] = 0.0 - static_cast<double>(i) * (gap + length);
  }
  for (std::size_t k = 0; k <= n; ++k) {
    const double t = static_cast<double>(k) * dt;
    tr.t.push_back(t);
    for (std::size_t i = 0; i <= followers; ++i) {
      auto& s = tr.vehicles[i];
      const double v = speed(i, t);
      const double h = 1e-6;
      s.x.push_back(x[i]);
      s.v.push_back(v);
      s.a.push_back((speed(i, t + h) - speed(i, t - h)) / (2 * h));
      s.s.push_back(i == 0 ? 0.0 : x[i - 1] - x[i] - length);
      s.dv.push_back(i == 0 ? 0.0 : speed(i - 1, t) - v);
      s.u.push_back(0.0);
    }
    for (std::size_t i = 0; i <= followers; ++i) x[i] += dt * speed(i, t);
  }
  return tr;
}

}  // namespace fixtures
