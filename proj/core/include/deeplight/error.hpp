#pragma once

#include <stdexcept>
#include <string>

namespace dl {

// Base for every error raised by the library. The CLI maps subclasses onto
// process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes or raster extents that do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value; the message names the offending field.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents (bad magic, truncation, unknown dtype).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Data values outside their contract (e.g. non-binary ISP targets).
class DataError : public Error {
 public:
  using Error::Error;
};

// Operation called in the wrong lifecycle state (consumed graph, missing
// features, missing gradients).
class StateError : public Error {
 public:
  using Error::Error;
};

// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace dl
