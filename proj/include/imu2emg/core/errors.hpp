#pragma once

#include <stdexcept>
#include <string>

namespace imu2emg {

// Failure classes. The CLI maps each family to its own exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that cannot be combined.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration values (kernel sizes, rates, group counts, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A caller broke a documented precondition (unsorted events, leakage, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Input sequence too short for the requested operation.
class LengthError : public Error {
 public:
  using Error::Error;
};

/// Filter design request outside the realizable range.
class DesignError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data on disk.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint could not be restored.
class LoadError : public Error {
 public:
  using Error::Error;
};

}  // namespace imu2emg
