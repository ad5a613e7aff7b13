#pragma once

#include <stdexcept>
#include <string>

namespace vaut {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible or out-of-range tensor extents.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A configuration value violates its documented domain.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// An API or CLI was called in a way its contract forbids.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file; the message names the file and row.
class ParseError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values in a place that requires finite ones (e.g. the loss).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace vaut
