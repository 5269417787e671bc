#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace recip {

/// Row-major binary mask; nonzero bytes are foreground.
struct BinaryMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> data;

  BinaryMask() = default;
  BinaryMask(std::size_t h, std::size_t w, std::uint8_t fill = 0)
      : height(h), width(w), data(h * w, fill) {}

  std::uint8_t& operator()(std::size_t row, std::size_t col) {
    return data[row * width + col];
  }
  std::uint8_t operator()(std::size_t row, std::size_t col) const {
    return data[row * width + col];
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (auto v : data) n += v != 0;
    return n;
  }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

/// Intersection-over-union of two same-sized masks; 0 when both are empty.
inline double mask_iou(const BinaryMask& a, const BinaryMask& b) {
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const bool fa = a.data[i] != 0, fb = b.data[i] != 0;
    inter += fa && fb;
    uni += fa || fb;
  }
  return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

}  // namespace recip
