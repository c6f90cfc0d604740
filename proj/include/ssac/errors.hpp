#pragma once

#include <stdexcept>
#include <string>

namespace ssac {

// Error taxonomy. The CLI maps these onto exit codes:
// UsageError -> 1, DataError family -> 2, NumericalError -> 3.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

/// Caller violated a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Tensor extents do not agree.
class DimensionError : public ContractError {
 public:
  using ContractError::ContractError;
};

/// Bad or unreadable input data (manifests, sample files, checkpoints).
class DataError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public DataError {
 public:
  ConfigError(const std::string& key, const std::string& what)
      : DataError("config key '" + key + "': " + what), key_(key) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

class StorageError : public DataError {
 public:
  using DataError::DataError;
};

/// Invalid generator parameters (e.g. a zero-area footprint).
class SpecError : public DataError {
 public:
  using DataError::DataError;
};

/// Non-finite values, failed factorizations, non-convergence.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace ssac
