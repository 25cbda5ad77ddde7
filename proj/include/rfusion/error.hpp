#pragma once

#include <stdexcept>
#include <string>

namespace rfusion {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Input outside the mathematical domain of an operation (e.g. log of a non-positive value).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition of an API was violated.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or a failed numerical procedure.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid or incomplete run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Unreadable, malformed, or incompatible data files.
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace rfusion
