#pragma once

#include <stdexcept>
#include <string>

namespace tsgdr {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file (JSON, CSV, checkpoint).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// A domain invariant does not hold. The message names the invariant and the
/// offending entity.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Array or matrix shapes that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

}  // namespace tsgdr
