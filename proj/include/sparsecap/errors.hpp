#pragma once

#include <stdexcept>
#include <string>

namespace sparsecap {

// Every failure raised by the library derives from Error, so callers (the CLI
// in particular) can separate library failures from programming bugs.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

// Raised by masked_softmax when every entry of a row is blocked.
class DegenerateRowError : public NumericError {
 public:
  using NumericError::NumericError;
};

// Raised by the MLM loss when no position is supervised.
class EmptySupervisionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace sparsecap
