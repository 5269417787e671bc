#include "recip/pipeline/evaluate.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

namespace recip {
namespace {

double pred_area(const EvalPrediction& p, IouType type) {
  return type == IouType::kBox ? p.box.area() : static_cast<double>(p.mask.count());
}

double pair_iou(const EvalPrediction& p, const EvalGroundTruth& g, IouType type) {
  return type == IouType::kBox ? iou(p.box, g.box) : mask_iou(p.mask, g.mask);
}

bool in_range(double area, const AreaRange& r) { return area >= r.lo && area < r.hi; }

// Total order among predictions of one image and class: score descending,
// then geometry, so the result never depends on input order.
bool ranks_before(const EvalPrediction& a, const EvalPrediction& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.box.x != b.box.x) return a.box.x < b.box.x;
  if (a.box.y != b.box.y) return a.box.y < b.box.y;
  if (a.box.w != b.box.w) return a.box.w < b.box.w;
  if (a.box.h != b.box.h) return a.box.h < b.box.h;
  return a.mask.data < b.mask.data;
}

struct ScoredOutcome {
  double score;
  std::size_t image_id;
  std::size_t rank;  // within the image
  bool tp;
};

}  // namespace

const char* box_source_name(BoxSource s) {
  switch (s) {
    case BoxSource::kRegressed: return "regressed";
    case BoxSource::kRefined: return "refined";
    case BoxSource::kDirect: return "direct";
  }
  return "?";
}

BoxSource parse_box_source(const std::string& name) {
  if (name == "regressed") return BoxSource::kRegressed;
  if (name == "refined") return BoxSource::kRefined;
  if (name == "direct") return BoxSource::kDirect;
  throw std::invalid_argument("unknown box source '" + name +
                              "' (expected regressed, refined or direct)");
}

std::array<double, 10> coco_iou_thresholds() {
  std::array<double, 10> t{};
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.5 + 0.05 * static_cast<double>(i);
  return t;
}

double average_precision(const std::vector<EvalPrediction>& preds,
                         const std::vector<EvalGroundTruth>& gts, IouType type,
                         double iou_threshold, AreaRange range) {
  std::set<int> classes;
  for (const auto& g : gts) classes.insert(g.class_id);

  double ap_sum = 0.0;
  std::size_t counted = 0;
  for (int cls : classes) {
    // Per image: gts (in-range first) and ranked predictions.
    std::map<std::size_t, std::vector<const EvalGroundTruth*>> gt_by_image;
    std::map<std::size_t, std::vector<const EvalPrediction*>> pred_by_image;
    std::size_t npos = 0;
    for (const auto& g : gts) {
      if (g.class_id != cls) continue;
      gt_by_image[g.image_id].push_back(&g);
      npos += in_range(g.area, range);
    }
    if (npos == 0) continue;
    for (const auto& p : preds) {
      if (p.class_id == cls) pred_by_image[p.image_id].push_back(&p);
    }

    std::vector<ScoredOutcome> outcomes;
    for (auto& [image_id, dets] : pred_by_image) {
      std::sort(dets.begin(), dets.end(),
                [](const EvalPrediction* a, const EvalPrediction* b) { return ranks_before(*a, *b); });
      if (dets.size() > kMaxDetsPerImage) dets.resize(kMaxDetsPerImage);
      std::vector<const EvalGroundTruth*> gi = gt_by_image[image_id];
      std::stable_partition(gi.begin(), gi.end(),
                            [&](const EvalGroundTruth* g) { return in_range(g->area, range); });
      std::vector<bool> taken(gi.size(), false);
      for (std::size_t r = 0; r < dets.size(); ++r) {
        double best_iou = std::min(iou_threshold, 1.0 - 1e-10);
        int best = -1;
        for (std::size_t j = 0; j < gi.size(); ++j) {
          if (taken[j]) continue;
          // Once an in-range gt is matched, ignored gts cannot displace it.
          if (best >= 0 && in_range(gi[static_cast<std::size_t>(best)]->area, range) &&
              !in_range(gi[j]->area, range)) {
            break;
          }
          const double v = pair_iou(*dets[r], *gi[j], type);
          if (v < best_iou) continue;
          best_iou = v;
          best = static_cast<int>(j);
        }
        if (best >= 0) {
          taken[static_cast<std::size_t>(best)] = true;
          if (!in_range(gi[static_cast<std::size_t>(best)]->area, range)) continue;
          outcomes.push_back({dets[r]->score, image_id, r, true});
        } else {
          if (!in_range(pred_area(*dets[r], type), range)) continue;
          outcomes.push_back({dets[r]->score, image_id, r, false});
        }
      }
    }
    std::sort(outcomes.begin(), outcomes.end(), [](const ScoredOutcome& a, const ScoredOutcome& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.image_id != b.image_id) return a.image_id < b.image_id;
      return a.rank < b.rank;
    });

    std::vector<double> precision, recall;
    double tp = 0.0, fp = 0.0;
    for (const auto& o : outcomes) {
      (o.tp ? tp : fp) += 1.0;
      recall.push_back(tp / static_cast<double>(npos));
      precision.push_back(tp / (tp + fp));
    }
    for (std::size_t i = precision.size(); i-- > 1;) {
      precision[i - 1] = std::max(precision[i - 1], precision[i]);
    }
    double sum = 0.0;
    for (int step = 0; step <= 100; ++step) {
      const double r = static_cast<double>(step) / 100.0;
      const auto it = std::lower_bound(recall.begin(), recall.end(), r);
      if (it != recall.end()) sum += precision[static_cast<std::size_t>(it - recall.begin())];
    }
    ap_sum += sum / 101.0;
    ++counted;
  }
  return counted ? ap_sum / static_cast<double>(counted) : 0.0;
}

ApSummary evaluate_ap(const std::vector<EvalPrediction>& preds,
                      const std::vector<EvalGroundTruth>& gts, IouType type) {
  ApSummary s;
  for (double t : coco_iou_thresholds()) {
    const double ap = average_precision(preds, gts, type, t);
    s.ap += ap / 10.0;
    if (std::abs(t - 0.5) < 1e-9) s.ap50 = ap;
    if (std::abs(t - 0.75) < 1e-9) s.ap75 = ap;
    s.ap_small += average_precision(preds, gts, type, t, {0.0, kSmallArea}) / 10.0;
    s.ap_medium += average_precision(preds, gts, type, t, {kSmallArea, kMediumArea}) / 10.0;
    s.ap_large += average_precision(preds, gts, type, t, {kMediumArea}) / 10.0;
  }
  return s;
}

std::vector<int> match_detections(const std::vector<DetectionResult>& dets,
                                  const std::vector<Instance>& gts, double iou_threshold) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
  std::vector<int> match(dets.size(), -1);
  std::vector<bool> taken(gts.size(), false);
  for (std::size_t i : order) {
    double best_iou = iou_threshold;
    int best = -1;
    for (std::size_t j = 0; j < gts.size(); ++j) {
      if (taken[j] || gts[j].class_id != dets[i].class_id) continue;
      const double v = iou(dets[i].regressed, gts[j].bbox);
      if (v >= best_iou && (best < 0 || v > best_iou)) {
        best_iou = v;
        best = static_cast<int>(j);
      }
    }
    if (best >= 0) {
      taken[static_cast<std::size_t>(best)] = true;
      match[i] = best;
    }
  }
  return match;
}

EvalReport evaluate(const std::vector<std::vector<DetectionResult>>& results,
                    const std::vector<SceneSample>& images, BoxSource source) {
  if (results.size() != images.size()) {
    throw std::invalid_argument("evaluate: " + std::to_string(results.size()) +
                                " result lists for " + std::to_string(images.size()) + " images");
  }
  EvalReport report;
  report.source = source;
  report.images = images.size();

  std::vector<EvalGroundTruth> gts;
  std::vector<EvalPrediction> box_preds, mask_preds;
  double iou_sum = 0.0;
  struct Acc {
    double sum = 0.0, small_sum = 0.0;
    std::size_t n = 0, small_n = 0;
    void add(double e, bool small) {
      sum += e;
      ++n;
      if (small) {
        small_sum += e;
        ++small_n;
      }
    }
    BoundaryStats stats() const {
      return {n ? sum / static_cast<double>(n) : 0.0, n,
              small_n ? small_sum / static_cast<double>(small_n) : 0.0, small_n};
    }
  } reg, ref, dir;

  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& instances = images[i].instances;
    for (const auto& inst : instances) {
      gts.push_back({i, inst.class_id, inst.bbox, inst.mask, static_cast<double>(inst.mask.count())});
    }
    const auto& dets = results[i];
    report.detections += dets.size();
    for (const auto& d : dets) {
      mask_preds.push_back({i, d.class_id, d.score, d.regressed, d.mask});
      switch (source) {
        case BoxSource::kRegressed:
          box_preds.push_back({i, d.class_id, d.score, d.regressed, {}});
          break;
        case BoxSource::kRefined:
          box_preds.push_back({i, d.class_id, d.score, d.refined, {}});
          break;
        case BoxSource::kDirect:
          if (auto direct = direct_baseline(d)) {
            box_preds.push_back({i, d.class_id, d.score, direct->regressed, {}});
          }
          break;
      }
    }

    const std::vector<int> match = match_detections(dets, instances);
    for (std::size_t k = 0; k < dets.size(); ++k) {
      if (match[k] < 0) continue;
      const Instance& g = instances[static_cast<std::size_t>(match[k])];
      const bool small = static_cast<double>(g.mask.count()) < kSmallArea;
      iou_sum += mask_iou(dets[k].mask, g.mask);
      ++report.mask_matched;
      reg.add(boundary_error(dets[k].regressed, g.bbox), small);
      ref.add(boundary_error(dets[k].refined, g.bbox), small);
      if (auto direct = direct_baseline(dets[k])) {
        dir.add(boundary_error(direct->regressed, g.bbox), small);
      }
    }
  }
  report.box = evaluate_ap(box_preds, gts, IouType::kBox);
  report.mask = evaluate_ap(mask_preds, gts, IouType::kMask);
  report.mean_mask_iou = report.mask_matched ? iou_sum / static_cast<double>(report.mask_matched) : 0.0;
  report.regressed = reg.stats();
  report.refined = ref.stats();
  report.direct = dir.stats();
  return report;
}

std::string format_report(const EvalReport& r) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "images %zu  detections %zu  boxes %s\n", r.images, r.detections,
                box_source_name(r.source));
  out += line;
  out += "metric    AP     AP50   AP75   APs    APm    APl\n";
  auto row = [&](const char* name, const ApSummary& s) {
    std::snprintf(line, sizeof line, "%-8s  %.3f  %.3f  %.3f  %.3f  %.3f  %.3f\n", name, s.ap,
                  s.ap50, s.ap75, s.ap_small, s.ap_medium, s.ap_large);
    out += line;
  };
  row("bbox", r.box);
  row("mask", r.mask);
  std::snprintf(line, sizeof line, "mask IoU (matched %zu)  %.3f\n", r.mask_matched, r.mean_mask_iou);
  out += line;
  out += "boundary error (px)  all     small\n";
  auto brow = [&](const char* name, const BoundaryStats& b) {
    std::snprintf(line, sizeof line, "  %-18s %.3f   %.3f  (n=%zu, small n=%zu)\n", name, b.mean,
                  b.small_mean, b.matched, b.small_matched);
    out += line;
  };
  brow("regressed", r.regressed);
  brow("refined", r.refined);
  brow("direct", r.direct);
  return out;
}

}  // namespace recip
