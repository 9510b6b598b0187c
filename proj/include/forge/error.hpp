#pragma once

#include <stdexcept>
#include <string>

namespace forge {

// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller-supplied value breaks a documented precondition or invariant.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// File missing, unreadable, or malformed.
class IoError : public Error {
 public:
  using Error::Error;
};

// Numerical procedure produced a non-finite value.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Remote inpainting backend failed or violated the protocol.
class BackendError : public Error {
 public:
  using Error::Error;
};

}  // namespace forge
