#pragma once

#include <stdexcept>
#include <string>

namespace moralclip {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller supplied arguments that violate a documented precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Malformed textual input (label strings, manifests, CSV rows).
class FormatError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Input that is well-formed but numerically degenerate (zero vectors, ...).
class DegenerateInputError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// A metric or statistic that has no defined value on the given data.
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failures.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace moralclip
