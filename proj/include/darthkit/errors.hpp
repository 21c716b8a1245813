#pragma once

#include <stdexcept>
#include <string>

namespace darthkit {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Two values that must share a layout (weights, tensors) do not.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A value left the numeric domain an operation requires (non-finite, zero norm).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed or incomplete configuration. `key()` names the offending entry.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what)
      : Error(what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace darthkit
