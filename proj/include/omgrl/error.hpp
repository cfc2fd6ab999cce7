#pragma once

#include <stdexcept>
#include <string>

namespace omgrl {

// Base of every error thrown by the library. The CLI maps NumericError to
// exit code 2 and everything else to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class StateError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed or degenerate input data (CSV ingestion, quantile edges, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

class DegenerateEstimateError : public Error {
 public:
  using Error::Error;
};

}  // namespace omgrl
