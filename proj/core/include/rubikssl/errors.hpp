#pragma once

#include <stdexcept>
#include <string>

namespace rubikssl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed file header or unknown container magic.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Header and payload disagree (truncated or padded files).
class CorruptionError : public Error {
 public:
  using Error::Error;
};

/// Data violates a documented invariant (non-finite voxels, bad flags, shapes).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent or impossible configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Bad argument to a pure function.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Request exceeds what the implementation can enumerate.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint weights cannot be transferred into a model.
class TransferError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure, always carries the offending path.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace rubikssl
