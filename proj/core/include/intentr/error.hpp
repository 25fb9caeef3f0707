#pragma once

#include <stdexcept>
#include <string>

namespace intentr {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input could not be read, or too much of it was malformed.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A metric (AUC) is undefined for the given data, e.g. a single class.
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent shapes or configuration.
class ShapeError : public Error {
 public:
  using Error::Error;
};

}  // namespace intentr
