#pragma once

#include <stdexcept>
#include <string>

namespace wiski {

/// Length or shape mismatch between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Operation requested on a state that cannot support it (e.g. MLL with n = 0).
class InvalidState : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Non-finite values or breakdown inside an iterative method.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A matrix that must be symmetric positive (semi-)definite is not.
class NotPsdError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Malformed, truncated or version-incompatible serialized data.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void require_dims(bool ok, const std::string& what);

}  // namespace wiski
