#pragma once

#include <stdexcept>
#include <string>

namespace dlsim {

/// Invalid scenario/topology/CLI configuration. CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// A simulation or estimator update produced a non-finite value.
/// Carries the grid time and sensor (1-based, 0 if not sensor-specific).
/// CLI maps this to exit code 3.
class NumericalAbort : public std::runtime_error {
 public:
  NumericalAbort(const std::string& what, double t, int sensor)
      : std::runtime_error(what), t(t), sensor(sensor) {}
  double t;
  int sensor;
};

}  // namespace dlsim
