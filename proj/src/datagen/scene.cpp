#include "recip/datagen/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace recip {
namespace {

// Integer-only draws on top of mt19937_64, whose output sequence is fixed by
// the standard (the std distributions are not).
class SceneRng {
 public:
  explicit SceneRng(std::uint64_t seed) : engine_(seed) {}

  // Uniform integer in [lo, hi].
  std::int64_t uniform(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % span;
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return lo + static_cast<std::int64_t>(v % span);
  }

  // Uniform real in [0, 1) from the top 53 bits.
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Log-uniform real in [lo, hi].
  double log_uniform(double lo, double hi) {
    return std::exp(std::log(lo) + unit() * (std::log(hi) - std::log(lo)));
  }

 private:
  std::mt19937_64 engine_;
};

struct Rgb {
  int r, g, b;
};

int color_distance(const Rgb& a, const Rgb& b) {
  return std::abs(a.r - b.r) + std::abs(a.g - b.g) + std::abs(a.b - b.b);
}

Rgb random_color(SceneRng& rng) {
  return {static_cast<int>(rng.uniform(0, 255)), static_cast<int>(rng.uniform(0, 255)),
          static_cast<int>(rng.uniform(0, 255))};
}

// Rasterization tests use doubled coordinates so pixel centers are integers.
BinaryMask rasterize(ShapeClass cls, std::int64_t x0, std::int64_t y0, std::int64_t w,
                     std::int64_t h, std::int64_t apex, std::size_t side) {
  BinaryMask mask(side, side);
  for (std::int64_t py = y0; py < y0 + h; ++py) {
    for (std::int64_t px = x0; px < x0 + w; ++px) {
      bool inside = false;
      switch (cls) {
        case ShapeClass::kRectangle:
          inside = true;
          break;
        case ShapeClass::kEllipse: {
          const std::int64_t dx = 2 * px + 1 - (2 * x0 + w);
          const std::int64_t dy = 2 * py + 1 - (2 * y0 + h);
          inside = dx * dx * h * h + dy * dy * w * w <= w * w * h * h;
          break;
        }
        case ShapeClass::kTriangle: {
          // Vertices at pixel centers: apex on the top row, base on the bottom row.
          const std::int64_t ax = 2 * (x0 + apex) + 1, ay = 2 * y0 + 1;
          const std::int64_t bx = 2 * x0 + 1, by = 2 * (y0 + h - 1) + 1;
          const std::int64_t cx = 2 * (x0 + w - 1) + 1, cy = by;
          const std::int64_t qx = 2 * px + 1, qy = 2 * py + 1;
          auto edge = [](std::int64_t x1, std::int64_t y1, std::int64_t x2, std::int64_t y2,
                         std::int64_t x, std::int64_t y) {
            return (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1);
          };
          const std::int64_t e0 = edge(ax, ay, bx, by, qx, qy);
          const std::int64_t e1 = edge(bx, by, cx, cy, qx, qy);
          const std::int64_t e2 = edge(cx, cy, ax, ay, qx, qy);
          inside = (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
          break;
        }
      }
      if (inside) mask(static_cast<std::size_t>(py), static_cast<std::size_t>(px)) = 1;
    }
  }
  return mask;
}

}  // namespace

const char* shape_class_name(int class_id) {
  switch (class_id) {
    case 0: return "rectangle";
    case 1: return "ellipse";
    case 2: return "triangle";
    default: return "unknown";
  }
}

void validate_scene_config(const SceneConfig& cfg) {
  if (cfg.image_size < 32) throw std::invalid_argument("scene image_size must be >= 32");
  if (cfg.num_classes < 2 || cfg.num_classes > 3) {
    throw std::invalid_argument("scene num_classes must be 2 or 3");
  }
  if (cfg.min_instances > cfg.max_instances) {
    throw std::invalid_argument("scene min_instances exceeds max_instances");
  }
  if (!(cfg.min_size_fraction > 0.0) || cfg.min_size_fraction > cfg.max_size_fraction ||
      cfg.max_size_fraction > 1.0) {
    throw std::invalid_argument("scene size fractions must satisfy 0 < min <= max <= 1");
  }
  if (cfg.noise_amplitude < 0 || cfg.noise_amplitude > 127) {
    throw std::invalid_argument("scene noise_amplitude must be in [0, 127]");
  }
}

SceneSample generate_scene(std::uint64_t seed, const SceneConfig& cfg) {
  validate_scene_config(cfg);
  const auto side = static_cast<std::int64_t>(cfg.image_size);
  const auto min_extent = std::max<std::int64_t>(
      2, static_cast<std::int64_t>(std::ceil(cfg.min_size_fraction * side)));
  const auto max_extent = std::max<std::int64_t>(
      min_extent, static_cast<std::int64_t>(std::floor(cfg.max_size_fraction * side)));

  SceneRng rng(seed);
  const auto target = static_cast<std::size_t>(rng.uniform(
      static_cast<std::int64_t>(cfg.min_instances), static_cast<std::int64_t>(cfg.max_instances)));
  const Rgb background = random_color(rng);

  struct Placed {
    int class_id;
    Rgb color;
    BinaryMask full;
    BinaryMask visible;
  };
  std::vector<Placed> placed;
  std::size_t attempts = 0;
  while (placed.size() < target) {
    if (++attempts > cfg.max_attempts) {
      if (placed.size() >= cfg.min_instances) break;
      throw GenerationError("cannot place " + std::to_string(cfg.min_instances) +
                            " instances in a " + std::to_string(side) + "px scene after " +
                            std::to_string(cfg.max_attempts) + " attempts");
    }
    const int cls = static_cast<int>(rng.uniform(0, cfg.num_classes - 1));
    // Scale-invariant size and aspect ratio.
    const double size = rng.log_uniform(static_cast<double>(min_extent), static_cast<double>(max_extent));
    const double aspect = std::sqrt(rng.log_uniform(0.5, 2.0));
    const std::int64_t w = std::clamp<std::int64_t>(std::llround(size * aspect), min_extent, max_extent);
    const std::int64_t h = std::clamp<std::int64_t>(std::llround(size / aspect), min_extent, max_extent);
    const std::int64_t x0 = rng.uniform(0, side - w);
    const std::int64_t y0 = rng.uniform(0, side - h);
    const std::int64_t apex = rng.uniform(0, w - 1);
    Rgb color = random_color(rng);
    if (color_distance(color, background) < 120) continue;
    if (std::any_of(placed.begin(), placed.end(),
                    [&](const auto& p) { return color_distance(color, p.color) < 90; })) {
      continue;
    }

    BinaryMask full = rasterize(static_cast<ShapeClass>(cls), x0, y0, w, h, apex,
                                cfg.image_size);
    // The new shape occludes earlier ones; every earlier instance must keep
    // enough visible area or the new shape is rejected.
    bool acceptable = true;
    std::vector<BinaryMask> updated;
    updated.reserve(placed.size());
    for (const auto& p : placed) {
      BinaryMask vis = p.visible;
      for (std::size_t i = 0; i < vis.data.size(); ++i) {
        if (full.data[i]) vis.data[i] = 0;
      }
      const std::size_t remaining = vis.count();
      if (remaining == 0 || static_cast<double>(remaining) <
                                cfg.min_visible_fraction * static_cast<double>(p.full.count())) {
        acceptable = false;
        break;
      }
      updated.push_back(std::move(vis));
    }
    if (!acceptable) continue;
    for (std::size_t i = 0; i < placed.size(); ++i) placed[i].visible = std::move(updated[i]);
    BinaryMask visible = full;
    placed.push_back({cls, color, std::move(full), std::move(visible)});
  }

  SceneSample sample;
  sample.height = cfg.image_size;
  sample.width = cfg.image_size;
  sample.image.resize(cfg.image_size * cfg.image_size * 3);
  const std::size_t npix = cfg.image_size * cfg.image_size;
  for (std::size_t i = 0; i < npix; ++i) {
    Rgb c = background;
    for (const auto& p : placed) {
      if (p.full.data[i]) c = p.color;
    }
    const int comps[3] = {c.r, c.g, c.b};
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const auto noise = static_cast<int>(rng.uniform(-cfg.noise_amplitude, cfg.noise_amplitude));
      const int v = std::clamp(comps[ch] + noise, 0, 255);
      sample.image[i * 3 + ch] = static_cast<float>(v) / 255.0f;
    }
  }
  for (auto& p : placed) {
    Instance inst;
    inst.class_id = p.class_id;
    inst.bbox = min_enclosing_box(p.visible);
    inst.mask = std::move(p.visible);
    sample.instances.push_back(std::move(inst));
  }
  return sample;
}

Box min_enclosing_box(const BinaryMask& mask) {
  std::size_t x0 = mask.width, y0 = mask.height, x1 = 0, y1 = 0;
  bool any = false;
  for (std::size_t r = 0; r < mask.height; ++r) {
    for (std::size_t c = 0; c < mask.width; ++c) {
      if (!mask(r, c)) continue;
      any = true;
      x0 = std::min(x0, c);
      x1 = std::max(x1, c);
      y0 = std::min(y0, r);
      y1 = std::max(y1, r);
    }
  }
  if (!any) throw EmptyMaskError();
  return Box{static_cast<double>(x0), static_cast<double>(y0),
             static_cast<double>(x1 - x0 + 1), static_cast<double>(y1 - y0 + 1)};
}

SceneSample flip_horizontal(const SceneSample& sample) {
  SceneSample out = sample;
  const std::size_t w = sample.width;
  for (std::size_t y = 0; y < sample.height; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        out.image[(y * w + x) * 3 + c] = sample.image[(y * w + (w - 1 - x)) * 3 + c];
      }
    }
  }
  for (std::size_t i = 0; i < sample.instances.size(); ++i) {
    const auto& src = sample.instances[i];
    auto& dst = out.instances[i];
    for (std::size_t y = 0; y < sample.height; ++y) {
      for (std::size_t x = 0; x < w; ++x) dst.mask(y, x) = src.mask(y, w - 1 - x);
    }
    dst.bbox.x = static_cast<double>(w) - src.bbox.x - src.bbox.w;
  }
  return out;
}

}  // namespace recip
