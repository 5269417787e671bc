#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <tuple>

#include "doctest.h"
#include "oracles.hpp"
#include "recip/core/error.hpp"
#include "recip/model/anchors.hpp"
#include "recip/model/checkpoint.hpp"
#include "recip/model/network.hpp"

using namespace recip;
namespace fs = std::filesystem;

TEST_CASE("anchor layout on a 128 x 128 image") {
  const AnchorGrid g = generate_anchors(AnchorConfig{}, 128, 128);
  CHECK(g.grid_h == 16);
  CHECK(g.grid_w == 16);
  CHECK(g.boxes.size() == 16 * 16 * 9);
  // Slot 4 is scale 48, ratio 1.
  const Box& a = g.boxes[4];
  CHECK(a.cx() == doctest::Approx(4.0));
  CHECK(a.cy() == doctest::Approx(4.0));
  CHECK(a.w == doctest::Approx(48.0));
  const Box& first = g.boxes[0];  // scale 32, ratio h/w = 0.5
  CHECK(first.h / first.w == doctest::Approx(0.5));
  CHECK(first.w * first.h == doctest::Approx(32.0 * 32.0));
  std::set<std::tuple<double, double, double, double>> unique;
  for (const Box& b : g.boxes) unique.insert({b.x, b.y, b.w, b.h});
  CHECK(unique.size() == g.boxes.size());
  const std::size_t last = g.boxes.size() - 1;
  CHECK(g.cell_of(last) == 255);
  CHECK(g.slot_of(last) == 8);
  CHECK(g.boxes[last].cx() == doctest::Approx(124.0));
}

TEST_CASE("anchor matching thresholds") {
  const AnchorGrid g = generate_anchors(AnchorConfig{}, 128, 128);
  const Box gt = g.boxes[(5 * 16 + 6) * 9 + 4];
  const auto m = match_anchors(g, {gt}, 128, 128);
  const auto& exact = m[(5 * 16 + 6) * 9 + 4];
  CHECK(exact.label == AnchorLabel::kPositive);
  CHECK(exact.gt_index == 0);
  for (std::size_t i = 0; i < m.size(); ++i) {
    Box clipped = clip_box(g.boxes[i], 128, 128);
    const double v = iou(clipped, gt);
    if (v >= 0.5) CHECK(m[i].label == AnchorLabel::kPositive);
    if (v < 0.4 && m[i].label == AnchorLabel::kPositive) CHECK(m[i].gt_index == 0);
    if (v >= 0.4 && v < 0.5) CHECK(m[i].label != AnchorLabel::kNegative);
  }
  // A tiny gt still claims its best anchor.
  const auto tiny = match_anchors(g, {Box{60, 60, 4, 4}}, 128, 128);
  std::size_t positives = 0;
  for (const auto& a : tiny) positives += a.label == AnchorLabel::kPositive;
  CHECK(positives == 1);
  // No gt: every anchor negative.
  for (const auto& a : match_anchors(g, {}, 128, 128)) CHECK(a.label == AnchorLabel::kNegative);
}

TEST_CASE("box encoding round trip") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<> u(0, 90), size(10, 90);
  for (int i = 0; i < 200; ++i) {
    const Box anchor{u(rng), u(rng), size(rng), size(rng)};
    const Box box{u(rng), u(rng), size(rng), size(rng)};
    const Box back = decode_box(anchor, encode_box(anchor, box));
    CHECK(back.x == doctest::Approx(box.x));
    CHECK(back.w == doctest::Approx(box.w));
    CHECK(back.h == doctest::Approx(box.h));
  }
  const Box a{0, 0, 10, 10};
  CHECK(std::isfinite(decode_box(a, {0, 0, 1e6, 1e6}).w));
}

TEST_CASE("NMS agrees with the brute-force selection") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<> pos(0, 60), size(5, 30), score(0, 1);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<ScoredBox> c(static_cast<std::size_t>(rng() % 30));
    std::vector<std::size_t> ids(1000);
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    std::shuffle(ids.begin(), ids.end(), rng);
    for (std::size_t i = 0; i < c.size(); ++i) {
      c[i].box = Box{pos(rng), pos(rng), size(rng), size(rng)};
      // Coarse scores force ties.
      c[i].score = std::round(score(rng) * 5) / 5;
      c[i].class_id = static_cast<int>(rng() % 2);
      c[i].anchor_index = ids[i];  // distinct, as in inference
    }
    CHECK(nms(c, 0.5) == oracle::nms(c, 0.5));
    CHECK(nms(c, 0.3) == oracle::nms(c, 0.3));
  }
  // Two identical boxes with equal scores: the lower anchor index survives.
  std::vector<ScoredBox> tie = {{Box{0, 0, 10, 10}, 0.9, 0, 7}, {Box{0, 0, 10, 10}, 0.9, 0, 3}};
  CHECK(nms(tie, 0.5) == std::vector<std::size_t>{1});
}

TEST_CASE("network output shapes") {
  const ModelConfig cfg;
  const Network<float> net(cfg);
  ParamStore store;
  net.init_params(store, 1);
  const auto fwd = net.forward(store, Tensor({3, 128, 128}));
  CHECK(fwd.psi.shape() == Shape{32, 32, 32});
  CHECK(fwd.cls.shape() == Shape{27, 16, 16});
  CHECK(fwd.reg.shape() == Shape{36, 16, 16});
  CHECK(fwd.repr.shape() == Shape{2 * 32 * 9, 16, 16});
  for (float v : fwd.psi.raw()) REQUIRE(std::isfinite(v));
  for (float v : fwd.cls.raw()) REQUIRE(std::isfinite(v));
  CHECK_THROWS_AS(net.forward(store, Tensor({3, 100, 128})), ShapeError);
}

TEST_CASE("object representation slicing") {
  BasicTensor<double> repr({2 * 3 * 2, 2, 2});
  for (std::size_t i = 0; i < repr.size(); ++i) repr[i] = static_cast<double>(i);
  const auto phi = extract_object_repr(repr, 1, 0, 1, 3);
  CHECK(phi.shape() == Shape{2, 3});
  CHECK(phi[0] == repr(6, 1, 0));
  CHECK(phi[5] == repr(11, 1, 0));
  BasicTensor<double> grad(repr.shape());
  scatter_object_repr_grad(grad, 1, 0, 1, phi);
  CHECK(grad(6, 1, 0) == repr(6, 1, 0));
  CHECK(grad(5, 1, 0) == 0.0);
}

TEST_CASE("checkpoint round trip and shape mismatch") {
  const fs::path path = fs::temp_directory_path() / "recip_test_model.ckpt";
  ModelConfig cfg;
  cfg.stem_channels = 8;
  cfg.backbone_channels = 8;
  cfg.pixel_hidden = 8;
  cfg.head_hidden = 8;
  cfg.repr_dim = 4;
  const Network<float> net(cfg);
  ParamStore a;
  net.init_params(a, 3);
  Checkpoint ck;
  store_to_checkpoint(a, ck, true);
  write_checkpoint(ck, path);

  ParamStore b;
  net.init_params(b, 4);
  checkpoint_to_store(read_checkpoint(path), b, true);
  for (const auto& e : a.entries()) CHECK(b.value(e.name) == e.value);

  ModelConfig wider = cfg;
  wider.repr_dim = 8;
  ParamStore c;
  Network<float>(wider).init_params(c, 3);
  try {
    checkpoint_to_store(read_checkpoint(path), c, false);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("object.repr") != std::string::npos);
  }

  { std::ofstream(path, std::ios::binary) << "RDSN"; }
  CHECK_THROWS_AS(read_checkpoint(path), DataError);
  fs::remove(path);
}
