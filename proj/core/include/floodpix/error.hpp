#pragma once

#include <stdexcept>
#include <string>

namespace floodpix {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A file could not be read, written, or failed validation.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Caller-supplied data or parameters violate an operation's precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A model could not be fitted (single-class data, singular covariance,
/// diverging loss, ...).
class FitError : public Error {
 public:
  using Error::Error;
};

}  // namespace floodpix
