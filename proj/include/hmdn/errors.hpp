#pragma once

#include <stdexcept>
#include <string>

namespace hmdn {

// Validation problems (bad config, bad shapes, bad input data, misuse of an
// API) map to process exit code 1; numerical failures map to exit code 2.

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : ValidationError {
  using ValidationError::ValidationError;
};

struct ShapeError : ValidationError {
  using ValidationError::ValidationError;
};

struct DataError : ValidationError {
  using ValidationError::ValidationError;
};

struct UsageError : ValidationError {
  using ValidationError::ValidationError;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace hmdn
