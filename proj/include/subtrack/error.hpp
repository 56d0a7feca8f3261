#pragma once

#include <stdexcept>
#include <string>

namespace subtrack {

// Process exit codes used by the command-line tool.
enum class ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kData = 2,
  kNumerical = 3,
};

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
  virtual ExitCode exit_code() const noexcept = 0;
};

// Bad or inconsistent configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kUsage; }
};

// Malformed input text; carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const noexcept { return line_; }
  ExitCode exit_code() const noexcept override { return ExitCode::kData; }

 private:
  std::size_t line_;
};

// Well-formed input that violates a structural or model invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kData; }
};

class NumericalError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::kNumerical; }
};

// No training curve overlaps a test curve for any admissible lag.
class NoMatchError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace subtrack
