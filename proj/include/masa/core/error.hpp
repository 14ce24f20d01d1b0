#pragma once

#include <stdexcept>
#include <string>

namespace masa {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid hyperparameters, decay rates, kernel sizes, model configs.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// API misuse: backward on a non-scalar, out-of-range labels, and so on.
class UsageError : public Error {
 public:
  using Error::Error;
};

// An operation produced NaN or Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace masa
