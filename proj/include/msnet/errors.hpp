#pragma once

#include <stdexcept>
#include <string>

namespace msnet {

// Every error raised by the library derives from Error so callers (the CLI in
// particular) can map categories onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape/arity mismatch inside a tensor operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A value outside an operation's domain.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// An object is in the wrong state for the request (missing grad, mismatched
/// parameter sets, non-deterministic gradient fragment).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration: bad model config, unknown config key, bad version.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or inconsistent input data (manifests, images, checkpoints).
class DataError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// A computation produced NaN or Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace msnet
