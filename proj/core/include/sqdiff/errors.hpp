#pragma once

#include <stdexcept>
#include <string>

namespace sqdiff {

/// Bad argument to an operation (negative size, dimension mismatch, ...).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A documented precondition of an operation does not hold for the input.
class PreconditionError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Matrix is not symmetric positive definite.
class FactorizationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Too few usable observations for a fit.
class InsufficientData : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sqdiff
