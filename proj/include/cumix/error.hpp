#pragma once

#include <stdexcept>
#include <string>

namespace cumix {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A value violates a documented invariant (labels, splits, soft targets).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A binary or text file does not follow its declared layout.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Reading or writing the filesystem failed.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A run or generator configuration is incomplete or inconsistent.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace cumix
