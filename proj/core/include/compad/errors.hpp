#pragma once

#include <stdexcept>
#include <string>

namespace compad {

// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Incompatible matrix/vector shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value (bad kernel width, unplaceable anchors, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data (parse failures, range violations).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Non-finite values, divergence, failed gradient evaluation.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace compad
