#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "recip/core/mask.hpp"

namespace recip {

/// Uncompressed run-length encoding in column-major order. Runs alternate
/// background/foreground starting with a (possibly empty) background run.
struct Rle {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint32_t> counts;

  friend bool operator==(const Rle&, const Rle&) = default;
};

Rle rle_encode(const BinaryMask& mask);

/// Throws DataError when the run lengths do not sum to height * width.
BinaryMask rle_decode(const std::vector<std::uint32_t>& counts, std::size_t height,
                      std::size_t width);

inline BinaryMask rle_decode(const Rle& rle) {
  return rle_decode(rle.counts, rle.height, rle.width);
}

}  // namespace recip
