#pragma once

#include <stdexcept>
#include <string>

namespace eqr {

/// Base for every error raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent dataset content.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Bad configuration or invalid arguments.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// An embedding or LLM provider failed (after retries).
class ProviderError : public Error {
 public:
  ProviderError(std::string error_class, const std::string& what)
      : Error(what), error_class_(std::move(error_class)) {}

  const std::string& error_class() const noexcept { return error_class_; }

 private:
  std::string error_class_;
};

/// LLM output could not be interpreted.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Index or cache built by a different provider.
class FingerprintMismatch : public Error {
 public:
  using Error::Error;
};

}  // namespace eqr
