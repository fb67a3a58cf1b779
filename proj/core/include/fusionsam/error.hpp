#pragma once

#include <stdexcept>
#include <string>

namespace fusionsam {

// Base class for every error raised by the library. The subclasses map onto
// the CLI exit codes (see tools/cli.cpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes or grid sizes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid hyperparameter or configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// NaN / Inf where finite values are required, or training divergence.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// API misuse: calling an operation outside its precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent on-disk data.
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace fusionsam
