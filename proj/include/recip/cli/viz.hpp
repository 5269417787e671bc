#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "recip/datagen/png_io.hpp"
#include "recip/datagen/scene.hpp"
#include "recip/pipeline/infer.hpp"

namespace recip {

using Color = std::array<std::uint8_t, 3>;

inline constexpr Color kRegressedColor = {255, 64, 32};
inline constexpr Color kRefinedColor = {32, 220, 64};

/// Mask overlays at 50% opacity, regressed and refined box outlines, and a
/// "<CLASS> <score>" label per detection. No detections: a plain copy.
RgbImage render_overlay(const SceneSample& image, const std::vector<DetectionResult>& dets);

/// 5x7 bitmap text; characters without a glyph are drawn as blanks.
void draw_text(RgbImage& img, int x, int y, const std::string& text, const Color& color);
void draw_rect(RgbImage& img, const Box& box, const Color& color);

}  // namespace recip
