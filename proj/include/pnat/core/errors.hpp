#pragma once

#include <stdexcept>
#include <string>

namespace pnat {

/// Shape or index mismatch between operands. Programming errors, mostly.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed input data: corrupt batches, unreadable corpora, bad checkpoints.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A NaN or Inf showed up where a finite value is required.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user-facing configuration (unknown keys, out-of-range values).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace pnat
