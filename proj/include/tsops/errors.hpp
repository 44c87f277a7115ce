#pragma once

#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>

namespace tsops {

// Invalid argument to a model function (non-finite input, s <= 0, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// IDM has no equilibrium at or above its free speed.
class NoEquilibriumError : public DomainError {
 public:
  using DomainError::DomainError;
};

// A derivative evaluated to NaN/inf during integration.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(std::size_t vehicle, double time, const std::string& what)
      : std::runtime_error(format(vehicle, time, what)),
        vehicle_(vehicle),
        time_(time) {}

  std::size_t vehicle() const noexcept { return vehicle_; }
  double time() const noexcept { return time_; }

 private:
  static std::string format(std::size_t vehicle, double time,
                            const std::string& what) {
    std::ostringstream oss;
    oss << "numerical blow-up at vehicle " << vehicle << ", t=" << time
        << ": " << what;
    return oss.str();
  }

  std::size_t vehicle_;
  double time_;
};

// Malformed scenario configuration. line() is 0 when the error is not tied
// to a particular line of a file (e.g. a command-line override).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, std::size_t line = 0,
              std::string field = {})
      : std::runtime_error(format(what, line, field)),
        line_(line),
        field_(std::move(field)) {}

  std::size_t line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  static std::string format(const std::string& what, std::size_t line,
                            const std::string& field) {
    std::ostringstream oss;
    if (line > 0) oss << "line " << line << ": ";
    if (!field.empty()) oss << "'" << field << "': ";
    oss << what;
    return oss.str();
  }

  std::size_t line_;
  std::string field_;
};

namespace detail {

template <typename... Args>
std::string concat(Args&&... args) {
  std::ostringstream oss;
  (oss << ... << args);
  return oss.str();
}

}  // namespace detail

}  // namespace tsops
