#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace diffdrive {

/// Scenario/config content that fails validation. The message carries the
/// offending field path (e.g. "controller.control_period").
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// A velocity plan that cannot satisfy its boundary conditions.
class InfeasiblePlanError : public std::runtime_error {
 public:
  InfeasiblePlanError(const std::string& what, std::size_t binding_section)
      : std::runtime_error(what), binding_section_(binding_section) {}

  /// Index of the path section whose constraint made the plan infeasible.
  std::size_t binding_section() const { return binding_section_; }

 private:
  std::size_t binding_section_;
};

/// Pole-placement design failure (singular Sylvester system, uncontrollable
/// parameter estimate). Callers fall back to the previous gains.
class DesignFailureError : public std::runtime_error {
 public:
  explicit DesignFailureError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace diffdrive
