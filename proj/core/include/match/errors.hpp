#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace match {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad argument or configuration value. Maps to a usage error in the CLI.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public ArgumentError {
 public:
  using ArgumentError::ArgumentError;
};

/// Malformed input file. Carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Well-formed input that violates a semantic invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class SamplingError : public Error {
 public:
  using Error::Error;
};

class DegenerateStepError : public Error {
 public:
  using Error::Error;
};

}  // namespace match
