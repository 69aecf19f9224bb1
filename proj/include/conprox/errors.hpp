#pragma once

#include <stdexcept>
#include <string>

namespace conprox {

/// Array dimensions that do not conform to the operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// NaN or infinity where a finite value is required.
class NonFiniteError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A filter whose supported part vanishes and so cannot be normalized.
class DegenerateFilterError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised by the divergence guard: objective grew beyond the allowed factor.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace conprox
