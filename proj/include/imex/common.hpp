#pragma once

#include <stdexcept>
#include <string>

namespace imex {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Bad argument, shape mismatch, violated precondition.
struct ValueError : Error {
  using Error::Error;
};

/// Corrupt or unreadable file, wrong magic/version, I/O failure.
struct FormatError : Error {
  using Error::Error;
};

/// Non-finite value produced where the contract requires finite data.
struct NumericError : Error {
  using Error::Error;
};

}  // namespace imex
