#pragma once

// Object-assisted instance masks: correlating the pixel representation map
// with an object's (fg, bg) representation, cropping with expanded boxes, and
// the OHEM-balanced mask loss.

#include <cstddef>
#include <vector>

#include "recip/core/box.hpp"
#include "recip/core/mask.hpp"
#include "recip/numerics/tensor.hpp"

namespace recip {

inline constexpr double kTrainExpandRatio = 1.5;
inline constexpr double kInferExpandRatio = 1.2;

/// psi: d x h x w pixel representations, phi: 2 x d (fg row, bg row).
/// Each row of phi is a 1x1 filter over psi; the two logit maps go through a
/// channel softmax. Returns 2 x h x w (fg, bg) probabilities.
template <typename T>
BasicTensor<T> correlate(const BasicTensor<T>& psi, const BasicTensor<T>& phi);

template <typename T>
struct CorrelateGrads {
  BasicTensor<T> psi;
  BasicTensor<T> phi;
};

template <typename T>
CorrelateGrads<T> correlate_backward(const BasicTensor<T>& psi, const BasicTensor<T>& phi,
                                     const BasicTensor<T>& probs,
                                     const BasicTensor<T>& grad_probs);

struct CropRegion {
  Box region;           // clipped to the bounds; zero size when disjoint
  double ratio = 1.0;
  bool intersects = false;
};

/// Center-retaining scaling of width and height by `ratio`, before clipping.
/// A zero-size box becomes a 1 x 1 region at its center.
Box expand_unclipped(const Box& box, double ratio);

/// expand_unclipped followed by clipping to [0, bound_w) x [0, bound_h).
/// Throws std::invalid_argument for ratio < 1.
CropRegion expand_box(const Box& box, double ratio, double bound_w, double bound_h);

/// Pixel-center containment: (col + 0.5, row + 0.5) in [x, x + w) x [y, y + h).
inline bool pixel_in_region(const Box& r, std::size_t row, std::size_t col) {
  const double cx = static_cast<double>(col) + 0.5, cy = static_cast<double>(row) + 0.5;
  return cx >= r.x && cx < r.right() && cy >= r.y && cy < r.bottom();
}

/// Box in image pixels to the frame of a map with the given stride.
inline Box to_map_frame(const Box& b, double stride) {
  return Box{b.x / stride, b.y / stride, b.w / stride, b.h / stride};
}

/// A map pixel is foreground when >= 50% of its stride x stride block is.
BinaryMask downsample_mask(const BinaryMask& mask, std::size_t stride);

struct MaskLossConfig {
  std::size_t stride = 4;
  double expand_ratio = kTrainExpandRatio;
  bool crop = true;            // false: every map pixel is a candidate
  bool ohem = true;            // false: every candidate bg pixel is supervised
  double bg_per_fg = 1.0;      // OHEM balance
};

/// One supervised object: the similarity map of a positive anchor and the
/// ground truth it was matched to.
template <typename T>
struct MaskLossInput {
  const BasicTensor<T>* similarity = nullptr;  // 2 x h x w
  const BinaryMask* gt_mask_small = nullptr;   // h x w, already downsampled
  Box gt_box;                                  // image pixels
};

struct MaskObjectStats {
  bool skipped = false;
  std::size_t fg = 0;           // fg pixels inside the region
  std::size_t bg_candidates = 0;
  std::size_t bg_selected = 0;
};

template <typename T>
struct MaskLossResult {
  T loss = 0;
  std::size_t used = 0;
  std::size_t skipped = 0;
  std::vector<BasicTensor<T>> grads;    // d loss / d similarity, 2 x h x w per object
  std::vector<BasicTensor<T>> weights;  // h x w supervision weights per object
  std::vector<MaskObjectStats> stats;
};

/// Mean over objects of the weighted pixel cross-entropy on the fg channel.
/// Pixels outside the expanded gt box get weight 0, fg pixels inside weight 1,
/// and the hardest bg pixels inside (bg_per_fg * #fg of them, ties to the
/// lower index) weight 1. Objects with no fg pixel inside are skipped.
template <typename T>
MaskLossResult<T> mask_training_loss(const std::vector<MaskLossInput<T>>& objects,
                                     const MaskLossConfig& cfg = {});

template <typename T>
struct CropResult {
  BasicTensor<T> fg;        // 1 x h x w
  bool outside = false;     // expanded box misses the map entirely
  CropRegion region;
};

/// Keeps the fg channel inside the expanded predicted box (image pixels,
/// mapped by `stride`) and zeroes everything else.
template <typename T>
CropResult<T> crop_inference_mask(const BasicTensor<T>& similarity, const Box& box,
                                  double ratio = kInferExpandRatio, std::size_t stride = 4);

}  // namespace recip
