#pragma once

#include <stdexcept>
#include <string>

namespace hmt {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor or layer dimensions that do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Malformed dataset records, unknown class names, label invariant violations.
class DataError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values or unsatisfiable preconditions.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced by a computation.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace hmt
