#include "recip/pipeline/infer.hpp"

#include <algorithm>
#include <cmath>

#include "recip/model/anchors.hpp"
#include "recip/pipeline/evaluate.hpp"
#include "recip/numerics/ops.hpp"

namespace recip {

std::vector<DetectionResult> infer(const Detector& model, const SceneSample& image,
                                   const InferConfig& cfg,
                                   const std::optional<MbrmParams>& mbrm) {
  const MbrmParams& refine_params = mbrm ? *mbrm : model.mbrm;
  const std::size_t h = image.height, w = image.width;
  const Tensor input = image_to_tensor<float>(image.image, h, w);
  const auto fwd = model.network.forward(model.params, input);
  const AnchorGrid grid = generate_anchors(model.config.anchors, h, w);
  const std::size_t c = static_cast<std::size_t>(model.config.num_classes);
  const double fw = static_cast<double>(w), fh = static_cast<double>(h);

  std::vector<ScoredBox> candidates;
  for (std::size_t a = 0; a < grid.boxes.size(); ++a) {
    const std::size_t cell = grid.cell_of(a), slot = grid.slot_of(a);
    const std::size_t row = cell / grid.grid_w, col = cell % grid.grid_w;
    for (std::size_t j = 0; j < c; ++j) {
      const double score = sigmoid(static_cast<double>(fwd.cls(slot * c + j, row, col)));
      if (score < cfg.score_threshold) continue;
      std::array<double, 4> off;
      for (std::size_t q = 0; q < 4; ++q) off[q] = fwd.reg(slot * 4 + q, row, col);
      const Box box = clip_box(decode_box(grid.boxes[a], off), fw, fh);
      if (box.w <= 0.0 || box.h <= 0.0) continue;
      candidates.push_back({box, score, static_cast<int>(j), a});
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(), [](const ScoredBox& x, const ScoredBox& y) {
    return x.score > y.score || (x.score == y.score && x.anchor_index < y.anchor_index);
  });
  if (candidates.size() > cfg.max_candidates) candidates.resize(cfg.max_candidates);

  std::vector<std::size_t> keep = nms(candidates, cfg.nms_iou);
  if (keep.size() > cfg.max_detections) keep.resize(cfg.max_detections);

  std::vector<DetectionResult> out;
  out.reserve(keep.size());
  for (std::size_t idx : keep) {
    const ScoredBox& cand = candidates[idx];
    const std::size_t cell = grid.cell_of(cand.anchor_index);
    const Tensor phi = extract_object_repr(fwd.repr, cell / grid.grid_w, cell % grid.grid_w,
                                           grid.slot_of(cand.anchor_index),
                                           model.config.repr_dim);
    const Tensor sim = correlate(fwd.psi, phi);
    const CropResult<float> crop =
        crop_inference_mask(sim, cand.box, cfg.expand_ratio, ModelConfig::kPixelStride);
    Tensor soft = bilinear_upsample(crop.fg, h, w).reshaped({h, w});

    DetectionResult det;
    det.class_id = cand.class_id;
    det.score = cand.score;
    det.regressed = cand.box;
    det.refined = refine_box(cand.box, soft, refine_params).box;
    det.mask = BinaryMask(h, w);
    for (std::size_t i = 0; i < soft.size(); ++i) {
      det.mask.data[i] = soft[i] >= cfg.mask_threshold ? 1 : 0;
    }
    if (cfg.keep_soft_mask) det.soft_mask = std::move(soft);
    out.push_back(std::move(det));
  }
  return out;
}

std::optional<DetectionResult> direct_baseline(const DetectionResult& det) {
  if (det.mask.count() == 0) return std::nullopt;
  DetectionResult out = det;
  out.regressed = min_enclosing_box(det.mask);
  out.refined = out.regressed;
  return out;
}

std::vector<MbrmSample> collect_mbrm_samples(const Detector& model,
                                             const std::vector<SceneSample>& images,
                                             const InferConfig& cfg) {
  InferConfig c = cfg;
  c.keep_soft_mask = true;
  std::vector<MbrmSample> samples;
  for (const SceneSample& image : images) {
    std::vector<DetectionResult> dets = infer(model, image, c);
    const std::vector<int> match = match_detections(dets, image.instances);
    for (std::size_t i = 0; i < dets.size(); ++i) {
      if (match[i] < 0) continue;
      const Box& gt = image.instances[static_cast<std::size_t>(match[i])].bbox;
      samples.push_back({std::move(dets[i].soft_mask), gt, dets[i].regressed});
    }
  }
  return samples;
}

double boundary_error(const Box& pred, const Box& gt) {
  return 0.25 * (std::abs(pred.x - gt.x) + std::abs(pred.right() - gt.right()) +
                 std::abs(pred.y - gt.y) + std::abs(pred.bottom() - gt.bottom()));
}

}  // namespace recip
