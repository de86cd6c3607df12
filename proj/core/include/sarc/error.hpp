#pragma once

#include <stdexcept>
#include <string>

namespace sarc {

// Base of every error raised by the library. The CLI maps the concrete
// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor extents or feature widths that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// NaN/inf encountered where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Input that is well formed but carries no usable signal: empty masks,
// constant regions, constant rankings, singular systems.
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class ProtocolMismatchError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

}  // namespace sarc
