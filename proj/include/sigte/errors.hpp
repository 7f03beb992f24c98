#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sigte {

// Base of every exception thrown by the library. The CLI maps the concrete
// subclasses onto exit codes (see cli.hpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape disagreement between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Violated precondition of an API (wrong usage, not bad data).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration value or configuration file.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf where finite numbers are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

class OverflowError : public Error {
 public:
  using Error::Error;
};

// Dataset content violates a record invariant.
class DataError : public Error {
 public:
  using Error::Error;
};

// Malformed input file; carries the 1-based line (or row) number.
class ParseError : public DataError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Training produced a non-finite loss.
class DivergenceError : public NumericError {
 public:
  DivergenceError(std::size_t step, const std::string& what)
      : NumericError("training diverged at step " + std::to_string(step) + ": " + what),
        step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

// Checkpoint and configuration describe different models.
class IncompatibleError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

}  // namespace sigte
