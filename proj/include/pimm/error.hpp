#pragma once

#include <stdexcept>
#include <string>

namespace pimm {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Incompatible array shapes for an operation.
struct ShapeError : Error {
  using Error::Error;
};

/// A value violates a documented domain (e.g. a label outside {0,1}).
struct ValueError : Error {
  using Error::Error;
};

/// Non-finite values or a diverging computation.
struct NumericError : Error {
  using Error::Error;
};

/// An API precondition was violated by the caller.
struct ContractError : Error {
  using Error::Error;
};

/// Problems with the run configuration (missing/unknown/invalid keys).
struct ConfigError : Error {
  using Error::Error;
};

/// Dataset-level validation failures (malformed rows, label constraint).
struct DataError : Error {
  using Error::Error;
};

/// Filesystem failures.
struct IoError : Error {
  using Error::Error;
};

}  // namespace pimm
