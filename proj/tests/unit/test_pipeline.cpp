#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "recip/core/error.hpp"
#include "recip/datagen/dataset.hpp"
#include "recip/pipeline/evaluate.hpp"
#include "recip/pipeline/infer.hpp"
#include "recip/pipeline/results_io.hpp"
#include "recip/pipeline/train.hpp"

using namespace recip;
using recip::testing::tiny_model;
using recip::testing::tiny_scene;

namespace {

BinaryMask rect_mask(std::size_t h, std::size_t w, const Box& b) {
  BinaryMask m(h, w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) m(r, c) = pixel_in_region(b, r, c);
  }
  return m;
}

EvalGroundTruth gt_of(std::size_t image, int cls, const Box& b, std::size_t size = 64) {
  EvalGroundTruth g{image, cls, b, rect_mask(size, size, b), 0.0};
  g.area = static_cast<double>(g.mask.count());
  return g;
}

EvalPrediction pred_of(std::size_t image, int cls, double score, const Box& b, std::size_t size = 64) {
  return {image, cls, score, b, rect_mask(size, size, b)};
}

}  // namespace

TEST_CASE("boundary error and direct baseline") {
  CHECK(boundary_error(Box{0, 0, 10, 10}, Box{1, 2, 10, 10}) == doctest::Approx(1.5));
  CHECK(boundary_error(Box{3, 4, 5, 6}, Box{3, 4, 5, 6}) == 0.0);
  DetectionResult d;
  d.regressed = d.refined = Box{0, 0, 30, 30};
  d.mask = BinaryMask(32, 32);
  CHECK_FALSE(direct_baseline(d).has_value());
  d.mask(4, 7) = d.mask(9, 2) = 1;
  const auto direct = direct_baseline(d);
  REQUIRE(direct.has_value());
  CHECK(direct->refined == Box{2, 4, 6, 6});
}

TEST_CASE("AP on a hand-computed case") {
  // Two gts; detections TP, FP, TP by descending score.
  const std::vector<EvalGroundTruth> gts = {gt_of(0, 0, {4, 4, 20, 20}), gt_of(0, 0, {36, 36, 20, 20})};
  const std::vector<EvalPrediction> preds = {pred_of(0, 0, 0.9, {4, 4, 20, 20}),
                                             pred_of(0, 0, 0.8, {30, 0, 10, 10}),
                                             pred_of(0, 0, 0.7, {36, 36, 20, 20})};
  const double expected = (51.0 + 50.0 * (2.0 / 3.0)) / 101.0;
  CHECK(average_precision(preds, gts, IouType::kBox, 0.5) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(average_precision(preds, gts, IouType::kMask, 0.5) == doctest::Approx(expected).epsilon(1e-12));
  // Perfect and empty predictions.
  CHECK(average_precision({preds[0], preds[2]}, gts, IouType::kBox, 0.95) == 1.0);
  CHECK(average_precision({}, gts, IouType::kBox, 0.5) == 0.0);
  CHECK(average_precision(preds, {}, IouType::kBox, 0.5) == 0.0);
}

TEST_CASE("AP agrees with the cut-off enumeration oracle") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<> pos(0, 44), size(4, 20), unit(0, 1);
  for (int trial = 0; trial < 150; ++trial) {
    std::vector<EvalGroundTruth> gts;
    std::vector<EvalPrediction> preds;
    const std::size_t images = 1 + rng() % 3;
    for (std::size_t img = 0; img < images; ++img) {
      const std::size_t ng = rng() % 4;
      for (std::size_t j = 0; j < ng; ++j) {
        gts.push_back(gt_of(img, static_cast<int>(rng() % 2),
                            Box{std::round(pos(rng)), std::round(pos(rng)), std::round(size(rng)),
                                std::round(size(rng))}));
      }
    }
    for (const auto& g : gts) {
      if (unit(rng) < 0.8) {
        const Box b{g.box.x + std::round(unit(rng) * 4 - 2), g.box.y + std::round(unit(rng) * 4 - 2),
                    g.box.w, g.box.h};
        preds.push_back(pred_of(g.image_id, g.class_id, unit(rng), b));
      }
    }
    const std::size_t nfp = rng() % 4;
    for (std::size_t j = 0; j < nfp; ++j) {
      preds.push_back(pred_of(rng() % images, static_cast<int>(rng() % 2), unit(rng),
                              Box{std::round(pos(rng)), std::round(pos(rng)), std::round(size(rng)),
                                  std::round(size(rng))}));
    }
    for (double thr : {0.5, 0.75, 0.9}) {
      for (IouType type : {IouType::kBox, IouType::kMask}) {
        const double got = average_precision(preds, gts, type, thr);
        const double want = oracle::average_precision(preds, gts, type, thr);
        CHECK(std::abs(got - want) <= 1e-9);
      }
    }
    // Invariant to input order.
    std::vector<EvalPrediction> shuffled = preds;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(average_precision(shuffled, gts, IouType::kBox, 0.5) ==
          average_precision(preds, gts, IouType::kBox, 0.5));
  }
}

TEST_CASE("AP never drops when a false positive is removed") {
  const std::vector<EvalGroundTruth> gts = {gt_of(0, 0, {4, 4, 20, 20}), gt_of(0, 0, {36, 36, 20, 20})};
  std::vector<EvalPrediction> preds = {pred_of(0, 0, 0.9, {4, 4, 20, 20}),
                                       pred_of(0, 0, 0.95, {40, 0, 10, 10}),
                                       pred_of(0, 0, 0.7, {36, 36, 20, 20})};
  const double with_fp = average_precision(preds, gts, IouType::kBox, 0.5);
  preds.erase(preds.begin() + 1);
  CHECK(average_precision(preds, gts, IouType::kBox, 0.5) >= with_fp);
}

TEST_CASE("area strata use the gt mask area") {
  const std::vector<EvalGroundTruth> gts = {gt_of(0, 0, {2, 2, 10, 10}), gt_of(0, 0, {12, 12, 50, 50})};
  // Only the large object is detected.
  const std::vector<EvalPrediction> preds = {pred_of(0, 0, 0.9, {12, 12, 50, 50})};
  const ApSummary s = evaluate_ap(preds, gts, IouType::kBox);
  CHECK(s.ap_large == doctest::Approx(1.0));
  CHECK(s.ap_small == 0.0);
  CHECK(s.ap50 == doctest::Approx((51.0) / 101.0));
}

TEST_CASE("detections match greedily by score within a class") {
  std::vector<Instance> gts(2);
  gts[0].class_id = 0;
  gts[0].bbox = Box{0, 0, 20, 20};
  gts[1].class_id = 1;
  gts[1].bbox = Box{30, 30, 20, 20};
  std::vector<DetectionResult> dets(3);
  dets[0].class_id = 0;
  dets[0].score = 0.5;
  dets[0].regressed = Box{1, 1, 20, 20};
  dets[1].class_id = 0;
  dets[1].score = 0.9;
  dets[1].regressed = Box{0, 0, 20, 20};
  dets[2].class_id = 0;  // wrong class for gt 1
  dets[2].score = 0.8;
  dets[2].regressed = Box{30, 30, 20, 20};
  CHECK(match_detections(dets, gts) == std::vector<int>{-1, 0, -1});
}

TEST_CASE("perfect results evaluate to perfect scores") {
  const Dataset ds = generate_dataset(3, 5, tiny_scene());
  std::vector<std::vector<DetectionResult>> results(ds.samples.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    for (const Instance& inst : ds.samples[i].instances) {
      DetectionResult d;
      d.class_id = inst.class_id;
      d.score = 0.9;
      d.regressed = d.refined = inst.bbox;
      d.mask = inst.mask;
      results[i].push_back(d);
    }
  }
  for (BoxSource src : {BoxSource::kRegressed, BoxSource::kRefined, BoxSource::kDirect}) {
    const EvalReport r = evaluate(results, ds.samples, src);
    CHECK(r.box.ap == doctest::Approx(1.0));
    CHECK(r.mask.ap == doctest::Approx(1.0));
    CHECK(r.mean_mask_iou == doctest::Approx(1.0));
    CHECK(r.regressed.mean == 0.0);
    CHECK(r.direct.mean == 0.0);
  }
  CHECK(format_report(evaluate(results, ds.samples, BoxSource::kRefined)).find("AP") != std::string::npos);
  CHECK_THROWS_AS(parse_box_source("tight"), std::invalid_argument);
}

TEST_CASE("results JSON round trip") {
  std::vector<std::vector<DetectionResult>> results(3);
  DetectionResult d;
  d.class_id = 2;
  d.score = 0.8125;
  d.regressed = Box{1.5, 2.25, 10, 12.75};
  d.refined = Box{2, 3, 9, 11};
  d.mask = rect_mask(16, 16, Box{2, 3, 9, 11});
  results[0].push_back(d);
  results[2].push_back(d);
  const auto back = results_from_json(results_to_json(results), 3);
  REQUIRE(back.size() == 3);
  CHECK(back[1].empty());
  REQUIRE(back[2].size() == 1);
  CHECK(back[2][0].class_id == 2);
  CHECK(back[2][0].score == d.score);
  CHECK(back[2][0].regressed == d.regressed);
  CHECK(back[2][0].refined == d.refined);
  CHECK(back[2][0].mask == d.mask);
  CHECK_THROWS_AS(results_from_json(results_to_json(results), 2), DataError);
  CHECK_THROWS_AS(results_from_json("{\"format\":\"recip-results\",\"version\":99,\"results\":[]}", 1),
                  DataError);
}

TEST_CASE("learning-rate schedule") {
  TrainConfig cfg;
  cfg.lr = 0.02;
  cfg.iterations = 1000;
  CHECK(learning_rate(cfg, 0) == doctest::Approx(0.002));
  CHECK(learning_rate(cfg, 50) == doctest::Approx(0.02 * 0.55));
  CHECK(learning_rate(cfg, 100) == doctest::Approx(0.02));
  CHECK(learning_rate(cfg, 749) == doctest::Approx(0.02));
  CHECK(learning_rate(cfg, 750) == doctest::Approx(0.002));
  CHECK(learning_rate(cfg, 900) == doctest::Approx(0.0002));
}

TEST_CASE("batch plans are replayable per iteration") {
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.seed = 12;
  const BatchPlan a = plan_batch(cfg, 17, 100);
  const BatchPlan b = plan_batch(cfg, 17, 100);
  CHECK(a.indices == b.indices);
  CHECK(a.flipped == b.flipped);
  CHECK(plan_batch(cfg, 18, 100).indices != a.indices);
  for (auto i : a.indices) CHECK(i < 100);
}

TEST_CASE("an image without instances only carries classification loss") {
  const ModelConfig mc = tiny_model();
  const Network<float> net(mc);
  ParamStore store;
  net.init_params(store, 1);
  SceneConfig sc = tiny_scene();
  sc.min_instances = sc.max_instances = 0;
  const SceneSample empty = generate_scene(1, sc);
  const auto fwd = net.forward(store, image_to_tensor<float>(empty.image, 64, 64));
  const auto grid = generate_anchors(mc.anchors, 64, 64);
  const auto l = image_loss<float>(fwd, grid, empty, mc, TrainConfig{});
  CHECK(l.terms.reg == 0.0);
  CHECK(l.terms.mask == 0.0);
  CHECK(l.terms.positives == 0);
  CHECK(std::isfinite(l.terms.cls));
  CHECK(l.terms.cls > 0.0);
}

TEST_CASE("inference is deterministic and well-formed") {
  const Detector det(tiny_model(), 5);
  const SceneSample s = generate_scene(9, tiny_scene());
  InferConfig cfg;
  cfg.score_threshold = 0.0;
  cfg.max_detections = 20;
  const auto a = infer(det, s, cfg);
  const auto b = infer(det, s, cfg);
  REQUIRE(a.size() == b.size());
  CHECK(a.size() <= 20);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].score == b[i].score);
    CHECK(a[i].refined == b[i].refined);
    CHECK(a[i].mask == b[i].mask);
    CHECK(a[i].mask.height == 64);
    if (i) CHECK(a[i - 1].score >= a[i].score);
  }
  // Nothing passes an impossible threshold.
  cfg.score_threshold = 1.1;
  CHECK(infer(det, s, cfg).empty());
}
