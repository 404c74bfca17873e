#pragma once

#include <stdexcept>
#include <string>

namespace sgdvit {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes or an invalid layer geometry.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value or option.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or missing input data (files, sequences, checkpoints).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or another numerical breakdown.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace sgdvit
