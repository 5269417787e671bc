#include "recip/cli/viz.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>

namespace recip {
namespace {

using Glyph = std::array<std::uint8_t, 7>;  // rows, low 5 bits, MSB = left

const std::map<char, Glyph>& font() {
  static const std::map<char, Glyph> glyphs = {
      {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
      {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
      {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}},
      {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
      {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
      {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
      {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
      {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
      {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
      {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
      {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}},
      {'A', {0x0E, 0x11, 0x11, 0x11, 0x1F, 0x11, 0x11}},
      {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}},
      {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}},
      {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}},
      {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}},
      {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}},
      {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
      {'N', {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11}},
      {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
      {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
      {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
      {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}},
      {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
      {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
      {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}},
  };
  return glyphs;
}

constexpr Color kMaskPalette[] = {{255, 215, 0}, {0, 191, 255}, {255, 0, 255}, {255, 255, 255}};

void put(RgbImage& img, long x, long y, const Color& c) {
  if (x < 0 || y < 0 || x >= static_cast<long>(img.width) || y >= static_cast<long>(img.height)) return;
  std::uint8_t* p = &img.pixels[(static_cast<std::size_t>(y) * img.width + static_cast<std::size_t>(x)) * 3];
  p[0] = c[0];
  p[1] = c[1];
  p[2] = c[2];
}

}  // namespace

void draw_text(RgbImage& img, int x, int y, const std::string& text, const Color& color) {
  const auto& glyphs = font();
  for (char ch : text) {
    const auto it = glyphs.find(static_cast<char>(std::toupper(static_cast<unsigned char>(ch))));
    if (it != glyphs.end()) {
      for (int r = 0; r < 7; ++r) {
        for (int c = 0; c < 5; ++c) {
          if (it->second[static_cast<std::size_t>(r)] & (0x10 >> c)) put(img, x + c, y + r, color);
        }
      }
    }
    x += 6;
  }
}

void draw_rect(RgbImage& img, const Box& box, const Color& color) {
  const long x0 = std::lround(box.x), y0 = std::lround(box.y);
  const long x1 = std::lround(box.right()) - 1, y1 = std::lround(box.bottom()) - 1;
  for (long x = x0; x <= x1; ++x) {
    put(img, x, y0, color);
    put(img, x, y1, color);
  }
  for (long y = y0; y <= y1; ++y) {
    put(img, x0, y, color);
    put(img, x1, y, color);
  }
}

RgbImage render_overlay(const SceneSample& image, const std::vector<DetectionResult>& dets) {
  RgbImage img = quantize_image(image.image, image.height, image.width);
  for (const DetectionResult& d : dets) {
    if (d.mask.height != img.height || d.mask.width != img.width) continue;
    const Color& c = kMaskPalette[static_cast<std::size_t>(std::clamp(d.class_id, 0, 3))];
    for (std::size_t i = 0; i < d.mask.data.size(); ++i) {
      if (!d.mask.data[i]) continue;
      for (std::size_t ch = 0; ch < 3; ++ch) {
        std::uint8_t& v = img.pixels[i * 3 + ch];
        v = static_cast<std::uint8_t>((static_cast<int>(v) + c[ch] + 1) / 2);
      }
    }
  }
  for (const DetectionResult& d : dets) {
    draw_rect(img, d.regressed, kRegressedColor);
    draw_rect(img, d.refined, kRefinedColor);
    char label[48];
    std::snprintf(label, sizeof label, "%s %.2f", shape_class_name(d.class_id), d.score);
    const int ty = std::max(0, static_cast<int>(std::lround(d.regressed.y)) - 8);
    draw_text(img, static_cast<int>(std::lround(d.regressed.x)), ty, label, {255, 255, 255});
  }
  return img;
}

}  // namespace recip
