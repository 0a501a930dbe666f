#pragma once

#include <stdexcept>
#include <string>

namespace intnet {

// Base class for all toolkit errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape disagreement between tensors or sequences.
struct DimensionError : Error {
  using Error::Error;
};

// Invalid configuration value.
struct ConfigError : Error {
  using Error::Error;
};

// Malformed input file; the message carries the offending line number.
struct ParseError : Error {
  using Error::Error;
};

// NaN/Inf encountered, or training diverged.
struct NumericError : Error {
  using Error::Error;
};

// API contract violation (e.g. backward on a non-scalar).
struct ContractError : Error {
  using Error::Error;
};

// A word with no characters was fed to an encoder.
struct EmptyWordError : Error {
  using Error::Error;
};

// Batch-norm eval requested before any train-mode update.
struct UninitializedStatsError : Error {
  using Error::Error;
};

// Brute-force oracle asked to enumerate too many sequences.
struct OracleSizeError : Error {
  using Error::Error;
};

}  // namespace intnet
