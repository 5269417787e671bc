#include "recip/datagen/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "recip/core/error.hpp"

namespace recip {

void write_png(const std::string& path, const RgbImage& image) {
  png_image desc;
  std::memset(&desc, 0, sizeof(desc));
  desc.version = PNG_IMAGE_VERSION;
  desc.width = static_cast<png_uint_32>(image.width);
  desc.height = static_cast<png_uint_32>(image.height);
  desc.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&desc, path.c_str(), 0, image.pixels.data(), 0, nullptr)) {
    const std::string msg = desc.message;
    png_image_free(&desc);
    throw DataError("cannot write PNG '" + path + "': " + msg);
  }
}

RgbImage read_png(const std::string& path) {
  png_image desc;
  std::memset(&desc, 0, sizeof(desc));
  desc.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&desc, path.c_str())) {
    throw DataError("cannot read PNG '" + path + "': " + desc.message);
  }
  desc.format = PNG_FORMAT_RGB;
  RgbImage image;
  image.height = desc.height;
  image.width = desc.width;
  image.pixels.resize(PNG_IMAGE_SIZE(desc));
  if (!png_image_finish_read(&desc, nullptr, image.pixels.data(), 0, nullptr)) {
    const std::string msg = desc.message;
    png_image_free(&desc);
    throw DataError("corrupt PNG '" + path + "': " + msg);
  }
  return image;
}

RgbImage quantize_image(const std::vector<float>& values, std::size_t height,
                        std::size_t width) {
  RgbImage image{height, width, std::vector<std::uint8_t>(height * width * 3)};
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    const float v = std::clamp(values[i], 0.0f, 1.0f);
    image.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
  }
  return image;
}

std::vector<float> dequantize_image(const RgbImage& image) {
  std::vector<float> out(image.pixels.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<float>(image.pixels[i]) / 255.0f;
  }
  return out;
}

}  // namespace recip
