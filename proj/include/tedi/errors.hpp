#pragma once

#include <stdexcept>
#include <string>

namespace tedi {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Two 6D rotation columns are parallel or near zero.
class DegenerateRotationError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration: bad rates, unknown schedule kind, K != T, ...
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Caller broke a precondition (shape mismatch, level 0 posterior, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Input data failed validation (non-rotation matrix, bad guides, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Malformed BVH / cache / checkpoint file.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line = 0)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

  int line() const { return line_; }

 private:
  int line_;
};

// A NaN or Inf escaped into a training loss or a generated buffer.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace tedi
