#pragma once

#include <stdexcept>
#include <string>

namespace egocast {

// Base class for everything this library throws on contract violations.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor/skeleton shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A precondition of an operation was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Invalid model or run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Dataset is unusable (empty, unannotated, too short).
class DataError : public Error {
 public:
  using Error::Error;
};

// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Quaternion with (near-)zero norm cannot represent a rotation.
class DegenerateRotationError : public Error {
 public:
  using Error::Error;
};

// Malformed input file. Carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& msg, long line)
      : Error("line " + std::to_string(line) + ": " + msg), line_(line) {}
  explicit ParseError(const std::string& msg) : Error(msg), line_(-1) {}
  long line() const { return line_; }

 private:
  long line_;
};

// Structurally valid file whose contents contradict each other.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace egocast
