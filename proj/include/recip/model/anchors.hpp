#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "recip/core/box.hpp"

namespace recip {

struct AnchorConfig {
  std::size_t stride = 8;
  std::vector<double> scales = {32.0, 48.0, 64.0};
  std::vector<double> ratios = {0.5, 1.0, 2.0};  // height / width

  std::size_t anchors_per_location() const { return scales.size() * ratios.size(); }
};

/// Anchors tiled over a grid_h x grid_w lattice. Anchor index is
/// (row * grid_w + col) * k + slot, slot = scale_index * |ratios| + ratio_index.
struct AnchorGrid {
  AnchorConfig config;
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
  std::vector<Box> boxes;

  std::size_t k() const { return config.anchors_per_location(); }
  std::size_t cell_of(std::size_t anchor) const { return anchor / k(); }
  std::size_t slot_of(std::size_t anchor) const { return anchor % k(); }
};

/// Anchor centers sit at ((col + 0.5) * stride, (row + 0.5) * stride).
AnchorGrid generate_anchors(const AnchorConfig& cfg, std::size_t image_h, std::size_t image_w);

enum class AnchorLabel { kNegative, kIgnore, kPositive };

struct AnchorMatch {
  AnchorLabel label = AnchorLabel::kNegative;
  int gt_index = -1;  // valid when positive
  double best_iou = 0.0;
};

struct MatchThresholds {
  double positive = 0.5;
  double negative = 0.4;
};

/// IoU >= positive: positive; < negative: negative; otherwise ignored.
/// Each gt additionally claims its highest-IoU anchor (lowest index on ties).
/// Anchors are clipped to the image for matching only.
std::vector<AnchorMatch> match_anchors(const AnchorGrid& grid, const std::vector<Box>& gt_boxes,
                                       double image_w, double image_h,
                                       const MatchThresholds& thresholds = {});

inline constexpr double kMaxLogScale = 4.0;

/// Center/size offsets (dx, dy, dw, dh) of `box` relative to `anchor`.
std::array<double, 4> encode_box(const Box& anchor, const Box& box);

/// Inverse of encode_box; size offsets are clamped at kMaxLogScale before exp.
Box decode_box(const Box& anchor, const std::array<double, 4>& offsets);

struct ScoredBox {
  Box box;
  double score = 0.0;
  int class_id = 0;
  std::size_t anchor_index = 0;
};

/// Greedy NMS by descending score (ties: lower anchor index first). Suppresses
/// same-class boxes whose IoU with a kept box exceeds `iou_threshold`.
/// Returns indices into `candidates` in keep order.
std::vector<std::size_t> nms(const std::vector<ScoredBox>& candidates, double iou_threshold = 0.5);

}  // namespace recip
