#include "recip/model/anchors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace recip {

AnchorGrid generate_anchors(const AnchorConfig& cfg, std::size_t image_h, std::size_t image_w) {
  AnchorGrid grid;
  grid.config = cfg;
  grid.grid_h = (image_h + cfg.stride - 1) / cfg.stride;
  grid.grid_w = (image_w + cfg.stride - 1) / cfg.stride;
  grid.boxes.reserve(grid.grid_h * grid.grid_w * grid.k());
  const double stride = static_cast<double>(cfg.stride);
  for (std::size_t row = 0; row < grid.grid_h; ++row) {
    for (std::size_t col = 0; col < grid.grid_w; ++col) {
      const double cx = (static_cast<double>(col) + 0.5) * stride;
      const double cy = (static_cast<double>(row) + 0.5) * stride;
      for (double scale : cfg.scales) {
        for (double ratio : cfg.ratios) {
          const double w = scale / std::sqrt(ratio);
          const double h = scale * std::sqrt(ratio);
          grid.boxes.push_back(Box{cx - 0.5 * w, cy - 0.5 * h, w, h});
        }
      }
    }
  }
  return grid;
}

std::vector<AnchorMatch> match_anchors(const AnchorGrid& grid, const std::vector<Box>& gt_boxes,
                                       double image_w, double image_h,
                                       const MatchThresholds& thresholds) {
  const std::size_t n = grid.boxes.size();
  std::vector<AnchorMatch> matches(n);
  if (gt_boxes.empty()) return matches;

  std::vector<Box> clipped(n);
  for (std::size_t a = 0; a < n; ++a) clipped[a] = clip_box(grid.boxes[a], image_w, image_h);

  std::vector<double> gt_best(gt_boxes.size(), -1.0);
  std::vector<std::size_t> gt_best_anchor(gt_boxes.size(), 0);
  for (std::size_t a = 0; a < n; ++a) {
    AnchorMatch& m = matches[a];
    for (std::size_t g = 0; g < gt_boxes.size(); ++g) {
      const double v = iou(clipped[a], gt_boxes[g]);
      if (v > m.best_iou) {
        m.best_iou = v;
        m.gt_index = static_cast<int>(g);
      }
      if (v > gt_best[g]) {
        gt_best[g] = v;
        gt_best_anchor[g] = a;
      }
    }
    if (m.best_iou >= thresholds.positive) {
      m.label = AnchorLabel::kPositive;
    } else if (m.best_iou >= thresholds.negative) {
      m.label = AnchorLabel::kIgnore;
    } else {
      m.label = AnchorLabel::kNegative;
    }
    if (m.label != AnchorLabel::kPositive && m.best_iou <= 0.0) m.gt_index = -1;
  }

  // Force-match: every gt keeps at least one anchor. Gts claim in order of
  // decreasing best IoU; a gt whose best anchor was already force-claimed
  // takes its best unclaimed anchor instead.
  std::vector<std::size_t> gt_order(gt_boxes.size());
  std::iota(gt_order.begin(), gt_order.end(), std::size_t{0});
  std::stable_sort(gt_order.begin(), gt_order.end(),
                   [&](std::size_t a, std::size_t b) { return gt_best[a] > gt_best[b]; });
  std::vector<bool> forced(n, false);
  for (std::size_t g : gt_order) {
    std::size_t a = gt_best_anchor[g];
    double best = gt_best[g];
    if (forced[a]) {
      best = -1.0;
      for (std::size_t b = 0; b < n; ++b) {
        if (forced[b]) continue;
        const double v = iou(clipped[b], gt_boxes[g]);
        if (v > best) {
          best = v;
          a = b;
        }
      }
    }
    forced[a] = true;
    AnchorMatch& m = matches[a];
    m.label = AnchorLabel::kPositive;
    m.gt_index = static_cast<int>(g);
    m.best_iou = best;
  }
  return matches;
}

std::array<double, 4> encode_box(const Box& anchor, const Box& box) {
  return {(box.cx() - anchor.cx()) / anchor.w, (box.cy() - anchor.cy()) / anchor.h,
          std::log(box.w / anchor.w), std::log(box.h / anchor.h)};
}

Box decode_box(const Box& anchor, const std::array<double, 4>& offsets) {
  const double cx = anchor.cx() + offsets[0] * anchor.w;
  const double cy = anchor.cy() + offsets[1] * anchor.h;
  const double w = anchor.w * std::exp(std::min(offsets[2], kMaxLogScale));
  const double h = anchor.h * std::exp(std::min(offsets[3], kMaxLogScale));
  return Box{cx - 0.5 * w, cy - 0.5 * h, w, h};
}

std::vector<std::size_t> nms(const std::vector<ScoredBox>& candidates, double iou_threshold) {
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (candidates[a].score != candidates[b].score) return candidates[a].score > candidates[b].score;
    return candidates[a].anchor_index < candidates[b].anchor_index;
  });
  std::vector<std::size_t> kept;
  for (std::size_t idx : order) {
    const ScoredBox& c = candidates[idx];
    bool suppressed = false;
    for (std::size_t k : kept) {
      if (candidates[k].class_id == c.class_id && iou(candidates[k].box, c.box) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(idx);
  }
  return kept;
}

}  // namespace recip
