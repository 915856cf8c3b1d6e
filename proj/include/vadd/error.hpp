#pragma once

#include <stdexcept>
#include <string>

namespace vadd {

/// Shapes or settings that cannot work together (e.g. a matmul with
/// mismatched extents, a gradient map missing a parameter).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A caller broke an operation's precondition.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A loss or intermediate quantity became NaN/Inf.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace vadd
