#pragma once

#include <stdexcept>
#include <string>

namespace glmmd {

/// Base class for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside a function's domain: natural-parameter violations,
/// responses outside the family support, non-positive dispersion.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed input files: missing columns, non-numeric cells, empty files.
class SchemaError : public Error {
 public:
  using Error::Error;
};

/// File system failures (unreadable input, unwritable output).
class IoError : public Error {
 public:
  using Error::Error;
};

/// An iterative method failed to reach its convergence criterion.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// A caller-supplied setting violates a documented precondition.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

}  // namespace glmmd
