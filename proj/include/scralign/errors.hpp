#pragma once

#include <stdexcept>
#include <string>

namespace scr {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Tensor shapes do not conform for the requested operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A caller-side precondition was violated (empty cloud, non-scalar backward, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Coincident or collinear input where a well-posed geometry is required.
class DegenerateGeometry : public Error {
 public:
  using Error::Error;
};

/// Non-finite values encountered during optimization.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Malformed file content. Carries the offending line when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what), message_(what), line_(line) {}
  std::size_t line() const noexcept { return line_; }
  /// Same error with `prefix` (typically "path: ") in front of the message.
  ParseError with_prefix(const std::string& prefix) const { return ParseError(prefix + message_, line_); }

 private:
  std::string message_;
  std::size_t line_;
};

/// Filesystem failures (unreadable/unwritable paths).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace scr
