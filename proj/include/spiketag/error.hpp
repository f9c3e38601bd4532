#pragma once

#include <stdexcept>
#include <string>

namespace spiketag {

// Base for every error the library raises. `exit_code()` is the process exit
// status the CLI maps the error to.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

// Bad configuration value, unknown key, or inconsistent settings.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Tensor extents that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Values outside an allowed alphabet (spikes, labels).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Malformed corpus / embedding / prediction files.
class ParseError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

// Checkpoint container problems and I/O failures.
class FormatError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

// NaN/Inf where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

}  // namespace spiketag
