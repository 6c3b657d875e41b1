#pragma once

#include <stdexcept>
#include <string>

namespace dermfuse {

// Invalid configuration or invalid call arguments (CLI exit code 2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape disagreement between tensors. Treated as a configuration-level
// failure since every shape in the pipeline is determined by the config.
struct ShapeError : ConfigError {
  using ConfigError::ConfigError;
};

// Malformed or inconsistent input data (CLI exit code 3).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite value produced where a finite one is required (CLI exit code 4).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace dermfuse
