#pragma once

#include <stdexcept>
#include <string>

namespace hypdrift {

// Base for every error the library raises.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A violated precondition on a caller-supplied argument.
struct InvalidArgument : Error {
  using Error::Error;
};

// {P,Q} with 1/P + 1/Q >= 1/2 (not hyperbolic).
struct InvalidTiling : InvalidArgument {
  using InvalidArgument::InvalidArgument;
};

// Floating point result left its domain (e.g. image off the half-plane).
struct NumericalBreakdown : Error {
  using Error::Error;
};

// A theorem hypothesis checked numerically does not hold.
struct ConditionViolated : Error {
  using Error::Error;
};

// Too few percolation trials passed the survival filter.
struct InsufficientSurvivors : Error {
  using Error::Error;
};

// Both sides of an edge split have zero conductance to infinity.
struct NotTransient : Error {
  using Error::Error;
};

// Malformed input file or configuration text.
struct ParseError : Error {
  using Error::Error;
};

namespace detail {

inline void require(bool condition, const std::string& what) {
  if (!condition) throw InvalidArgument(what);
}

}  // namespace detail
}  // namespace hypdrift
