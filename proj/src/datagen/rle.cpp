#include "recip/datagen/rle.hpp"

#include <string>

#include "recip/core/error.hpp"

namespace recip {

Rle rle_encode(const BinaryMask& mask) {
  Rle rle{mask.height, mask.width, {}};
  std::uint8_t current = 0;
  std::uint32_t run = 0;
  for (std::size_t c = 0; c < mask.width; ++c) {
    for (std::size_t r = 0; r < mask.height; ++r) {
      const std::uint8_t v = mask(r, c) ? 1 : 0;
      if (v != current) {
        rle.counts.push_back(run);
        run = 0;
        current = v;
      }
      ++run;
    }
  }
  rle.counts.push_back(run);
  return rle;
}

BinaryMask rle_decode(const std::vector<std::uint32_t>& counts, std::size_t height,
                      std::size_t width) {
  std::size_t total = 0;
  for (auto c : counts) total += c;
  if (total != height * width) {
    throw DataError("RLE run lengths sum to " + std::to_string(total) + ", expected " +
                    std::to_string(height * width) + " for a " + std::to_string(height) +
                    "x" + std::to_string(width) + " mask");
  }
  BinaryMask mask(height, width);
  std::size_t pos = 0;
  std::uint8_t value = 0;
  for (auto run : counts) {
    for (std::uint32_t i = 0; i < run; ++i, ++pos) {
      mask(pos % height, pos / height) = value;
    }
    value ^= 1;
  }
  return mask;
}

}  // namespace recip
