#pragma once

#include <array>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "recip/core/box.hpp"
#include "recip/core/mask.hpp"
#include "recip/datagen/scene.hpp"
#include "recip/pipeline/infer.hpp"

namespace recip {

enum class IouType { kBox, kMask };
enum class BoxSource { kRegressed, kRefined, kDirect };

const char* box_source_name(BoxSource s);
/// Throws std::invalid_argument for anything but regressed/refined/direct.
BoxSource parse_box_source(const std::string& name);

struct EvalPrediction {
  std::size_t image_id = 0;
  int class_id = 0;
  double score = 0.0;
  Box box;
  BinaryMask mask;
};

struct EvalGroundTruth {
  std::size_t image_id = 0;
  int class_id = 0;
  Box box;
  BinaryMask mask;
  double area = 0.0;  // mask pixel count; decides the size stratum
};

struct AreaRange {
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
};

inline constexpr double kSmallArea = 16.0 * 16.0;
inline constexpr double kMediumArea = 48.0 * 48.0;
inline constexpr std::size_t kMaxDetsPerImage = 100;

/// 0.50, 0.55, ..., 0.95.
std::array<double, 10> coco_iou_thresholds();

/// AP at one IoU threshold and area range: per class, predictions sorted by
/// descending score greedily claim the best-IoU unmatched gt; precision is
/// made monotone and sampled at 101 recall points; classes without gt are
/// skipped. Gts outside the range are ignored, as are unmatched predictions
/// outside it. Returns 0 when no class has a gt in range.
double average_precision(const std::vector<EvalPrediction>& preds,
                         const std::vector<EvalGroundTruth>& gts, IouType type,
                         double iou_threshold, AreaRange range = {});

struct ApSummary {
  double ap = 0.0;  // mean over 0.50:0.95
  double ap50 = 0.0;
  double ap75 = 0.0;
  double ap_small = 0.0;
  double ap_medium = 0.0;
  double ap_large = 0.0;
};

ApSummary evaluate_ap(const std::vector<EvalPrediction>& preds,
                      const std::vector<EvalGroundTruth>& gts, IouType type);

struct BoundaryStats {
  double mean = 0.0;
  std::size_t matched = 0;
  double small_mean = 0.0;
  std::size_t small_matched = 0;
};

struct EvalReport {
  BoxSource source = BoxSource::kRefined;
  ApSummary box;
  ApSummary mask;
  std::size_t images = 0;
  std::size_t detections = 0;
  double mean_mask_iou = 0.0;  // over detections matched to a gt
  std::size_t mask_matched = 0;
  // Boundary error per box method over the same matched detection set.
  BoundaryStats regressed, refined, direct;
};

/// Detections matched to gts of one image: greedy by descending score, same
/// class, box IoU >= threshold. Returns for each detection the gt index or -1.
std::vector<int> match_detections(const std::vector<DetectionResult>& dets,
                                  const std::vector<Instance>& gts, double iou_threshold = 0.5);

/// Full report. `results[i]` are the detections on `images[i]`; box AP uses
/// the boxes named by `source` (direct drops empty-mask detections), mask AP
/// never depends on `source`.
EvalReport evaluate(const std::vector<std::vector<DetectionResult>>& results,
                    const std::vector<SceneSample>& images, BoxSource source);

std::string format_report(const EvalReport& report);

}  // namespace recip
