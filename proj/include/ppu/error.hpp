#pragma once

#include <stdexcept>
#include <string>

namespace ppu {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or dimension disagreement between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid argument, configuration or size precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Non-finite values or other numeric breakdown at runtime.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents (point files, checkpoints, manifests).
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace ppu
