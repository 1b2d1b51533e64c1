#pragma once

#include <stdexcept>
#include <string>

namespace falip {

// Operand shapes don't agree.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Caller supplied a value outside an operation's domain.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A region selected no tokens.
class EmptyRoaError : public ArgumentError {
 public:
  using ArgumentError::ArgumentError;
};

// Malformed PPM / NTF / manifest input.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Missing or mis-shaped tensor in a weight set.
class WeightError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// NaN or Inf escaped a kernel.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace falip
