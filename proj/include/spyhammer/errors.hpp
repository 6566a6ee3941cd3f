#pragma once

#include <stdexcept>
#include <string>

namespace spyhammer {

/// Base of every error raised by the library. The CLI maps the concrete
/// type onto its exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the valid domain (address, temperature, empty input).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or malformed input file.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class CalibrationError : public Error {
 public:
  CalibrationError(int temp_c, const std::string& what)
      : Error(what), temp_c_(temp_c) {}
  int temperature() const noexcept { return temp_c_; }

 private:
  int temp_c_;
};

/// Victim row has no physical neighbour on one side.
class EdgeError : public Error {
 public:
  using Error::Error;
};

/// The black box produced no observable flips.
class InsufficientSignalError : public Error {
 public:
  using Error::Error;
};

class UnknownMappingError : public Error {
 public:
  using Error::Error;
};

class UnderdeterminedError : public Error {
 public:
  using Error::Error;
};

/// Canary monitoring saw no flip at any enrolled temperature.
class UnknownTemperatureError : public InsufficientSignalError {
 public:
  using InsufficientSignalError::InsufficientSignalError;
};

class FingerprintMismatchError : public Error {
 public:
  using Error::Error;
};

}  // namespace spyhammer
