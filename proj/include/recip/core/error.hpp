#pragma once

#include <stdexcept>
#include <string>

namespace recip {

// Tensor/layer shape disagreement.
class ShapeError : public std::invalid_argument {
 public:
  explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

// Bad data on disk (datasets, checkpoints, results files).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical breakdown during training (NaN gradients, NaN losses).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace recip
