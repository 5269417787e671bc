#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace recip {

/// 8-bit interleaved RGB image.
struct RgbImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;  // height * width * 3
};

void write_png(const std::string& path, const RgbImage& image);

/// Grayscale and RGBA inputs are converted to RGB. Throws DataError naming
/// the file on any failure.
RgbImage read_png(const std::string& path);

/// [0, 1] floats to 8-bit with round-to-nearest.
RgbImage quantize_image(const std::vector<float>& values, std::size_t height,
                        std::size_t width);

std::vector<float> dequantize_image(const RgbImage& image);

}  // namespace recip
