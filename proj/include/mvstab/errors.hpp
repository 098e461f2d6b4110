#pragma once

#include <stdexcept>
#include <string>

namespace mvstab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument: bad shapes, degenerate intervals, malformed input.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition of an operation does not hold.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// A function returned a non-finite value at a quadrature node.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

/// Eigensolver or linear solve failure.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// The truncation interval cuts off too much probability mass.
class TruncationError : public Error {
 public:
  using Error::Error;
};

/// The discrete measure cannot support the requested polynomial degree.
class ResolutionError : public Error {
 public:
  using Error::Error;
};

/// Result would leave the representable range (e.g. exp overflow).
class RangeError : public Error {
 public:
  using Error::Error;
};

/// A particle left the finite numbers during time stepping.
class BlowUpError : public Error {
 public:
  using Error::Error;
};

/// The Fokker-Planck scheme lost positivity.
class SchemeError : public Error {
 public:
  using Error::Error;
};

/// Configuration file problems (syntax, unknown keys, bad values).
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace mvstab
