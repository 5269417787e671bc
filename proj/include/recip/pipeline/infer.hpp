#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "recip/core/box.hpp"
#include "recip/core/mask.hpp"
#include "recip/corr_crop/corr_crop.hpp"
#include "recip/datagen/scene.hpp"
#include "recip/mbrm/mbrm.hpp"
#include "recip/pipeline/detector.hpp"

namespace recip {

struct InferConfig {
  double score_threshold = 0.3;
  double nms_iou = 0.5;
  std::size_t max_candidates = 1000;  // top-scoring candidates entering NMS
  std::size_t max_detections = 100;
  double expand_ratio = kInferExpandRatio;
  double mask_threshold = 0.4;
  bool keep_soft_mask = false;  // retain the upsampled soft mask (MBRM training data)
};

struct DetectionResult {
  int class_id = 0;
  double score = 0.0;
  Box regressed;
  Box refined;
  BinaryMask mask;   // image resolution, binarized at mask_threshold
  Tensor soft_mask;  // h x w, only with keep_soft_mask
};

/// score threshold -> NMS -> object representation -> correlation -> crop at
/// the expansion ratio -> bilinear upsampling to image size -> refine_box ->
/// binarization. Uses `mbrm` in place of the detector's own parameters when
/// given. Deterministic: a pure function of its inputs.
std::vector<DetectionResult> infer(const Detector& model, const SceneSample& image,
                                   const InferConfig& cfg = {},
                                   const std::optional<MbrmParams>& mbrm = std::nullopt);

/// Mask-derived baseline: the box becomes the minimum enclosing rectangle
/// of the binarized mask. Returns nullopt when the mask is empty.
std::optional<DetectionResult> direct_baseline(const DetectionResult& det);

/// Phase-two training data: detections on `images` matched to a gt (same
/// class, box IoU >= 0.5), each with its soft mask, gt box and regressed box.
std::vector<MbrmSample> collect_mbrm_samples(const Detector& model,
                                             const std::vector<SceneSample>& images,
                                             const InferConfig& cfg = {});

/// Mean of |d left|, |d right|, |d top|, |d bottom| in pixels.
double boundary_error(const Box& pred, const Box& gt);

}  // namespace recip
