// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace snerv {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inconsistent model or layer configuration (shape mismatch, invalid field).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Caller-supplied data violates a precondition (odd sizes, mismatched frames).
class InputError : public Error {
 public:
  using Error::Error;
};

/// API misuse, e.g. backward on a non-scalar.
class UsageError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Stored file failed validation (checksum, truncation).
class CorruptionError : public Error {
 public:
  using Error::Error;
};

class VersionError : public Error {
 public:
  using Error::Error;
};

/// Compressed container did not reload to the identical payload.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

}  // namespace snerv
