#pragma once

#include <stdexcept>
#include <string>

namespace subsage {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data (CSV, schema, dataset shape).
class DataError : public Error {
 public:
  using Error::Error;
};

// Malformed model file or an ensemble that violates structural invariants.
class ModelError : public Error {
 public:
  using Error::Error;
};

// A numerical procedure cannot produce a meaningful result
// (degenerate bootstrap distribution, too few samples, ...).
class NumericError : public Error {
 public:
  using Error::Error;
};

// Caller supplied an argument outside the documented domain.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

}  // namespace subsage
