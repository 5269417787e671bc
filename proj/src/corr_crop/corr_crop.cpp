#include "recip/corr_crop/corr_crop.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "recip/numerics/ops.hpp"

namespace recip {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
void check_correlate_shapes(const BasicTensor<T>& psi, const BasicTensor<T>& phi) {
  require_rank(psi, 3, "correlate psi");
  require_rank(phi, 2, "correlate phi");
  if (phi.dim(0) != 2 || phi.dim(1) != psi.dim(0)) {
    throw ShapeError("correlate: object representation " + shape_string(phi.shape()) +
                     " does not match pixel representation " + shape_string(psi.shape()) +
                     " (expected 2 x d)");
  }
}

}  // namespace

template <typename T>
BasicTensor<T> correlate(const BasicTensor<T>& psi, const BasicTensor<T>& phi) {
  check_correlate_shapes(psi, phi);
  const std::size_t d = psi.dim(0), plane = psi.dim(1) * psi.dim(2);
  BasicTensor<T> logits({2, psi.dim(1), psi.dim(2)});
  Eigen::Map<RowMat<T>>(logits.ptr(), 2, plane).noalias() =
      Eigen::Map<const RowMat<T>>(phi.ptr(), 2, d) *
      Eigen::Map<const RowMat<T>>(psi.ptr(), d, plane);
  return softmax_channels(logits);
}

template <typename T>
CorrelateGrads<T> correlate_backward(const BasicTensor<T>& psi, const BasicTensor<T>& phi,
                                     const BasicTensor<T>& probs,
                                     const BasicTensor<T>& grad_probs) {
  check_correlate_shapes(psi, phi);
  const std::size_t d = psi.dim(0), plane = psi.dim(1) * psi.dim(2);
  const BasicTensor<T> grad_logits = softmax_channels_backward(probs, grad_probs);
  Eigen::Map<const RowMat<T>> gl(grad_logits.ptr(), 2, plane);
  CorrelateGrads<T> g{BasicTensor<T>(psi.shape()), BasicTensor<T>(phi.shape())};
  Eigen::Map<RowMat<T>>(g.psi.ptr(), d, plane).noalias() =
      Eigen::Map<const RowMat<T>>(phi.ptr(), 2, d).transpose() * gl;
  Eigen::Map<RowMat<T>>(g.phi.ptr(), 2, d).noalias() =
      gl * Eigen::Map<const RowMat<T>>(psi.ptr(), d, plane).transpose();
  return g;
}

Box expand_unclipped(const Box& box, double ratio) {
  if (box.w <= 0.0 || box.h <= 0.0) {
    return Box{box.cx() - 0.5, box.cy() - 0.5, 1.0, 1.0};
  }
  const double w = box.w * ratio, h = box.h * ratio;
  return Box{box.cx() - 0.5 * w, box.cy() - 0.5 * h, w, h};
}

CropRegion expand_box(const Box& box, double ratio, double bound_w, double bound_h) {
  if (!(ratio >= 1.0)) throw std::invalid_argument("expand_box: ratio must be >= 1");
  const Box grown = expand_unclipped(box, ratio);
  CropRegion r;
  r.ratio = ratio;
  r.region = clip_box(grown, bound_w, bound_h);
  r.intersects = r.region.w > 0.0 && r.region.h > 0.0;
  return r;
}

BinaryMask downsample_mask(const BinaryMask& mask, std::size_t stride) {
  const std::size_t h = (mask.height + stride - 1) / stride;
  const std::size_t w = (mask.width + stride - 1) / stride;
  BinaryMask out(h, w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      std::size_t fg = 0;
      for (std::size_t y = r * stride; y < std::min(mask.height, (r + 1) * stride); ++y) {
        for (std::size_t x = c * stride; x < std::min(mask.width, (c + 1) * stride); ++x) {
          fg += mask(y, x) != 0;
        }
      }
      out(r, c) = 2 * fg >= stride * stride ? 1 : 0;
    }
  }
  return out;
}

template <typename T>
MaskLossResult<T> mask_training_loss(const std::vector<MaskLossInput<T>>& objects,
                                     const MaskLossConfig& cfg) {
  MaskLossResult<T> result;
  std::vector<PixelLoss<T>> losses;
  losses.reserve(objects.size());

  for (const auto& obj : objects) {
    const BasicTensor<T>& sim = *obj.similarity;
    const BinaryMask& gt = *obj.gt_mask_small;
    require_rank(sim, 3, "mask_training_loss similarity");
    const std::size_t h = sim.dim(1), w = sim.dim(2), plane = h * w;
    if (sim.dim(0) != 2 || gt.height != h || gt.width != w) {
      throw ShapeError("mask_training_loss: similarity " + shape_string(sim.shape()) +
                       " vs gt mask " + std::to_string(gt.height) + "x" +
                       std::to_string(gt.width));
    }

    const Box region =
        cfg.crop ? expand_box(to_map_frame(obj.gt_box, static_cast<double>(cfg.stride)),
                              cfg.expand_ratio, static_cast<double>(w), static_cast<double>(h))
                       .region
                 : Box{0.0, 0.0, static_cast<double>(w), static_cast<double>(h)};

    BasicTensor<T> weight({h, w});
    BasicTensor<T> target({h, w});
    BasicTensor<T> fg_prob({h, w});
    std::copy(sim.ptr(), sim.ptr() + plane, fg_prob.ptr());
    MaskObjectStats stats;
    std::vector<std::size_t> bg;
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        if (!pixel_in_region(region, r, c)) continue;
        const std::size_t i = r * w + c;
        if (gt.data[i]) {
          target[i] = T{1};
          weight[i] = T{1};
          ++stats.fg;
        } else {
          bg.push_back(i);
        }
      }
    }
    stats.bg_candidates = bg.size();
    if (stats.fg == 0) {
      stats.skipped = true;
      ++result.skipped;
      result.stats.push_back(stats);
      result.weights.push_back(std::move(weight));
      losses.push_back({});
      continue;
    }

    std::size_t keep = bg.size();
    if (cfg.ohem) {
      keep = std::min(bg.size(), static_cast<std::size_t>(
                                     std::llround(cfg.bg_per_fg * static_cast<double>(stats.fg))));
      // Hardest background = highest -log(1 - p); sort keeps lower index on ties.
      std::stable_sort(bg.begin(), bg.end(),
                       [&](std::size_t a, std::size_t b) { return fg_prob[a] > fg_prob[b]; });
    }
    for (std::size_t j = 0; j < keep; ++j) weight[bg[j]] = T{1};
    stats.bg_selected = keep;

    losses.push_back(pixel_cross_entropy(fg_prob, target, weight));
    result.stats.push_back(stats);
    result.weights.push_back(std::move(weight));
    ++result.used;
  }

  const T scale = result.used ? T{1} / static_cast<T>(result.used) : T{0};
  double total = 0.0;
  for (std::size_t o = 0; o < objects.size(); ++o) {
    const BasicTensor<T>& sim = *objects[o].similarity;
    BasicTensor<T> grad(sim.shape());
    if (!result.stats[o].skipped) {
      total += losses[o].loss;
      for (std::size_t i = 0; i < losses[o].grad.size(); ++i) grad[i] = losses[o].grad[i] * scale;
    }
    result.grads.push_back(std::move(grad));
  }
  result.loss = static_cast<T>(total) * scale;
  return result;
}

template <typename T>
CropResult<T> crop_inference_mask(const BasicTensor<T>& similarity, const Box& box, double ratio,
                                  std::size_t stride) {
  require_rank(similarity, 3, "crop_inference_mask");
  const std::size_t h = similarity.dim(1), w = similarity.dim(2);
  CropResult<T> out;
  out.fg = BasicTensor<T>({1, h, w});
  out.region = expand_box(to_map_frame(box, static_cast<double>(stride)), ratio,
                          static_cast<double>(w), static_cast<double>(h));
  if (!out.region.intersects) {
    out.outside = true;
    return out;
  }
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      if (pixel_in_region(out.region.region, r, c)) out.fg(0, r, c) = similarity(0, r, c);
    }
  }
  return out;
}

#define RECIP_INSTANTIATE_CORR(T)                                                        \
  template BasicTensor<T> correlate(const BasicTensor<T>&, const BasicTensor<T>&);       \
  template CorrelateGrads<T> correlate_backward(const BasicTensor<T>&, const BasicTensor<T>&, \
                                                const BasicTensor<T>&, const BasicTensor<T>&); \
  template MaskLossResult<T> mask_training_loss(const std::vector<MaskLossInput<T>>&,    \
                                                const MaskLossConfig&);                  \
  template CropResult<T> crop_inference_mask(const BasicTensor<T>&, const Box&, double,  \
                                             std::size_t);

RECIP_INSTANTIATE_CORR(float)
RECIP_INSTANTIATE_CORR(double)

#undef RECIP_INSTANTIATE_CORR

}  // namespace recip
