#pragma once

#include <stdexcept>
#include <string>

namespace biosense {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or geometry. Maps to CLI exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// The compartment reduction does not apply for the given geometry/flow
/// (depletion factor outside (0, 1)).
class RegimeError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// An argument outside the domain of an operation (negative concentration,
/// A_m > A*, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Integrator failure, non-finite values, or an unsolvable algebraic step.
/// Maps to CLI exit code 3.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Every sensor sensitivity is zero, so the variance approximation is
/// undefined. Maps to CLI exit code 4.
class DegenerateDesignError : public Error {
 public:
  using Error::Error;
};

}  // namespace biosense
