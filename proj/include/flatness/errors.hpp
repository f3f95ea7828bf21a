#pragma once

#include <stdexcept>
#include <string>

namespace flatness {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad arguments: dimension mismatch, parameters out of range, malformed input.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// A scale-dependent operation was asked to work below the sample resolution.
class ResolutionError : public Error {
 public:
  using Error::Error;
};

/// A checked structural property failed on constructed data.
class InvariantViolation : public Error {
 public:
  using Error::Error;
};

}  // namespace flatness
