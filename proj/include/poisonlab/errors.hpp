#pragma once

#include <stdexcept>

namespace poisonlab {

// Tensor or vector dimensions do not line up.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A value lies outside the set an operation is defined on (bad action index,
// non-simplex policy row, ...).
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

// NaN or infinity where a finite number is required.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or empty caller input.
struct InputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A valid request that the chosen component does not implement.
struct UnsupportedError : std::logic_error {
  using std::logic_error::logic_error;
};

// Raised by the game loop when a budget, power or delivery check fails.
struct InvariantViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace poisonlab
