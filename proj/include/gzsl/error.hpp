#pragma once

#include <stdexcept>
#include <string>

namespace gzsl {

// Base of every error raised by the library. The CLI maps the subclasses onto
// exit codes (usage 1, validation 2, numerical 3).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Argument outside an operation's domain (x <= 0 for digamma, bad label, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Malformed input files, configs, or datasets that fail validation.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf encountered, or training diverged.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// A pipeline phase was invoked without the checkpoints it depends on.
class PrerequisiteError : public Error {
 public:
  using Error::Error;
};

}  // namespace gzsl
