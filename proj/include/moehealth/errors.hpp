#pragma once

#include <stdexcept>
#include <string>

namespace moehealth {

/// Base class for all structured errors raised by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Incompatible dimensions between operands (both shapes are named in the message).
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid numeric content (non-finite inputs, out-of-range ids, ...).
class ValueError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration supplied by the caller.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Filesystem-level failure (missing file, unwritable path).
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed or invariant-violating data content.
class DataError : public Error {
 public:
  DataError(const std::string& what, long line = -1)
      : Error(line >= 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

  long line() const { return line_; }

 private:
  long line_ = -1;
};

}  // namespace moehealth
