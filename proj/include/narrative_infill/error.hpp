#pragma once

#include <stdexcept>
#include <string>

namespace narrative_infill {

// Malformed input files, bad flags, invalid indices. CLI exit code 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or dimension mismatch between tensors.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// NaN losses, empty losses, unreliable gradient checks. CLI exit code 3.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace narrative_infill
