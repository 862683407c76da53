#pragma once

#include <stdexcept>
#include <string>

namespace synfault {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An argument violates a documented precondition.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Tensor or batch shapes do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An object was used in the wrong lifecycle state (e.g. backward twice).
class StateError : public Error {
 public:
  using Error::Error;
};

/// A file on disk is corrupt, truncated or of an unknown version.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Input is numerically degenerate (zero variance, constant labels, ...).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// A run configuration failed validation.
class ValidationError : public Error {
 public:
  using Error::Error;
};

namespace detail {

template <class E = ParameterError>
inline void require(bool condition, const std::string& message) {
  if (!condition) throw E(message);
}

}  // namespace detail
}  // namespace synfault
