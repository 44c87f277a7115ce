#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <optional>
#include <vector>

namespace tsops {

enum class Integrator { kRk4, kEuler };

inline const char* to_string(Integrator m) {
  return m == Integrator::kEuler ? "euler" : "rk4";
}

inline std::optional<Integrator> parse_integrator(const std::string& name) {
  if (name == "rk4") return Integrator::kRk4;
  if (name == "euler") return Integrator::kEuler;
  return std::nullopt;
}

/// Fixed-step explicit integrator for y' = f(t, y) over flat state vectors.
/// Owns its stage buffers so repeated steps do not allocate.
class FixedStepIntegrator {
 public:
  FixedStepIntegrator(Integrator method, std::size_t dim)
      : method_(method), k1_(dim), k2_(dim), k3_(dim), k4_(dim), tmp_(dim) {}

  Integrator method() const noexcept { return method_; }

  // rhs(t, std::span<const double> y, std::span<double> dy)
  template <typename Rhs>
  void step(Rhs&& rhs, double t, double dt, std::span<double> y) {
    const std::size_t n = y.size();
    if (method_ == Integrator::kEuler) {
      rhs(t, std::span<const double>(y), std::span<double>(k1_));
      for (std::size_t i = 0; i < n; ++i) y[i] += dt * k1_[i];
      return;
    }
    const double h2 = 0.5 * dt;
    rhs(t, std::span<const double>(y), std::span<double>(k1_));
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = y[i] + h2 * k1_[i];
    rhs(t + h2, std::span<const double>(tmp_), std::span<double>(k2_));
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = y[i] + h2 * k2_[i];
    rhs(t + h2, std::span<const double>(tmp_), std::span<double>(k3_));
    for (std::size_t i = 0; i < n; ++i) tmp_[i] = y[i] + dt * k3_[i];
    rhs(t + dt, std::span<const double>(tmp_), std::span<double>(k4_));
    for (std::size_t i = 0; i < n; ++i) {
      y[i] += dt / 6.0 * (k1_[i] + 2.0 * k2_[i] + 2.0 * k3_[i] + k4_[i]);
    }
  }

 private:
  Integrator method_;
  std::vector<double> k1_, k2_, k3_, k4_, tmp_;
};

}  // namespace tsops
