#pragma once

#include <stdexcept>
#include <string>

namespace dialect_lab {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed file contents (bad header, truncated chunk, bad row).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Well-formed input that uses an encoding or feature we do not handle.
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Tensor or matrix dimensions that do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A precondition on an argument value was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Training diverged (non-finite loss).
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace dialect_lab
