#pragma once

#include <stdexcept>
#include <string>

namespace cbfn {

// Dimension/shape disagreements between tensors handed to an op.
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// Structurally invalid configuration (bad kernel rate, non-exact conv
// output size, odd input to a downsampler, ...).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// API misuse: backward on a non-scalar, missing global input, etc.
class UsageError : public std::runtime_error {
 public:
  explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values where finite ones are required (NaN gradient/loss).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// File format or filesystem failures.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cbfn
