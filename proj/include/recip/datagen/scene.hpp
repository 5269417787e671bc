#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "recip/core/box.hpp"
#include "recip/core/mask.hpp"

namespace recip {

enum class ShapeClass : int { kRectangle = 0, kEllipse = 1, kTriangle = 2 };

const char* shape_class_name(int class_id);

struct SceneConfig {
  std::size_t image_size = 128;
  std::size_t min_instances = 1;
  std::size_t max_instances = 4;
  int num_classes = 3;              // 2: rectangle/ellipse, 3: + triangle
  double min_size_fraction = 0.08;  // shape extent relative to image side
  double max_size_fraction = 0.60;
  int noise_amplitude = 12;         // per-channel uniform noise, in 1/255 units
  double min_visible_fraction = 0.25;
  std::size_t max_attempts = 2000;
};

struct Instance {
  int class_id = 0;
  Box bbox;
  BinaryMask mask;
};

/// Image is height x width x 3 (interleaved RGB) with values in [0, 1].
struct SceneSample {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> image;
  std::vector<Instance> instances;

  float pixel(std::size_t y, std::size_t x, std::size_t c) const {
    return image[(y * width + x) * 3 + c];
  }
};

class GenerationError : public std::runtime_error {
 public:
  explicit GenerationError(const std::string& what) : std::runtime_error(what) {}
};

class EmptyMaskError : public std::domain_error {
 public:
  EmptyMaskError() : std::domain_error("min_enclosing_box: mask has no foreground pixel") {}
};

/// Validates ranges; throws std::invalid_argument on a malformed config.
void validate_scene_config(const SceneConfig& cfg);

/// Deterministic for a given seed. Later shapes occlude earlier ones; the
/// occluded pixels are removed from the earlier instance masks.
SceneSample generate_scene(std::uint64_t seed, const SceneConfig& cfg = {});

/// Tightest box covering every foreground pixel.
Box min_enclosing_box(const BinaryMask& mask);

/// Mirrors image, masks and boxes around the vertical axis.
SceneSample flip_horizontal(const SceneSample& sample);

}  // namespace recip
