#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "recip/mbrm/mbrm.hpp"

using namespace recip;

namespace {

Tensor random_mask(std::size_t h, std::size_t w, std::mt19937_64& rng) {
  Tensor m({h, w});
  std::uniform_real_distribution<float> u(0, 1);
  for (auto& v : m.raw()) v = u(rng);
  return m;
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

TEST_CASE("boundary profiles are per-line maxima") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor m = random_mask(1 + rng() % 20, 1 + rng() % 20, rng);
    CHECK(boundary_profile(m, Axis::kHorizontal) == oracle::profile(m, true));
    CHECK(boundary_profile(m, Axis::kVertical) == oracle::profile(m, false));
  }
  const Tensor batched({1, 3, 4}, 0.25f);
  CHECK(boundary_profile(batched, Axis::kHorizontal).size() == 4);
}

TEST_CASE("prior is a normalized discrete Gaussian") {
  const auto p = boundary_prior(10.0, 40.0, 0.05, 32);  // sigma 2
  CHECK(sum(p) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::max_element(p.begin(), p.end()) - p.begin() == 10);
  CHECK(p[8] / p[10] == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
  CHECK(p[9] == doctest::Approx(p[11]).epsilon(1e-12));
  // sigma below the floor: one-hot at the rounded center.
  const auto hot = boundary_prior(10.4, 1.0, 0.05, 32);
  CHECK(hot[10] == 1.0);
  CHECK(sum(hot) == 1.0);
  const auto zero = boundary_prior(7.0, 50.0, 0.0, 16);
  CHECK(zero[7] == 1.0);
  // Center outside the range still yields a distribution.
  CHECK(sum(boundary_prior(-3.0, 40.0, 0.05, 16)) == doctest::Approx(1.0));
}

TEST_CASE("posterior matches the normalized product") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<> u(0.01, 1);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 30;
    std::vector<double> prior(n), like(n);
    for (auto& v : prior) v = u(rng);
    for (auto& v : like) v = u(rng);
    const double z = sum(prior);
    for (auto& v : prior) v /= z;
    const auto got = boundary_posterior(prior, like);
    const auto want = oracle::posterior(prior, like);
    CHECK(got.argmax == want.argmax);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(got.posterior[i] - want.p[i]) <= 1e-12);
  }
  // Ties resolve to the lowest index.
  const std::vector<double> flat(5, 0.2), ones(5, 1.0);
  CHECK(boundary_posterior(flat, ones).argmax == 0);
}

TEST_CASE("likelihood runs reversed for right and bottom sides") {
  std::mt19937_64 rng(3);
  MbrmParams p = MbrmParams::zeros(4);
  std::uniform_real_distribution<> u(-1, 1);
  for (auto& k : p.kernel) k = u(rng);
  p.bias = 0.3;
  std::vector<double> prof(20);
  for (auto& v : prof) v = (u(rng) + 1) / 2;
  std::vector<double> rev(prof.rbegin(), prof.rend());
  auto right = boundary_likelihood(prof, p, Side::kRight);
  const auto left_of_rev = boundary_likelihood(rev, p, Side::kLeft);
  std::reverse(right.begin(), right.end());
  for (std::size_t i = 0; i < prof.size(); ++i) CHECK(right[i] == doctest::Approx(left_of_rev[i]));
  for (double v : boundary_likelihood(prof, MbrmParams::zeros(4), Side::kTop)) CHECK(v == 0.5);
}

TEST_CASE("zero gamma returns the regressed box") {
  std::mt19937_64 rng(4);
  const Tensor m = random_mask(64, 64, rng);
  MbrmParams p = MbrmParams::zeros(4, 0.0);
  p.kernel[3] = 5.0;
  const Box b{10.25, 7.5, 20.0, 31.75};
  CHECK(refine_box(b, m, p).box == b);
}

TEST_CASE("zero kernel follows the prior") {
  Tensor m({48, 48});
  for (std::size_t r = 10; r < 30; ++r) {
    for (std::size_t c = 5; c < 40; ++c) m[r * 48 + c] = 1.0f;
  }
  const Box b{8, 12, 30, 16};
  const RefineResult r = refine_box(b, m, MbrmParams::zeros());
  CHECK(r.box == b);
  const RefineResult none = refine_box(b, Tensor({48, 48}), MbrmParams::zeros());
  CHECK(none.no_evidence);
  CHECK(none.box == b);
}

TEST_CASE("an edge-detecting kernel snaps to a sharp mask") {
  Tensor m({48, 48});
  for (std::size_t r = 10; r < 30; ++r) {
    for (std::size_t c = 5; c < 40; ++c) m[r * 48 + c] = 1.0f;
  }
  MbrmParams p = MbrmParams::zeros(4, 0.1);
  p.kernel[4] = 20.0;  // likes a filled pixel ...
  p.kernel[3] = -20.0;  // ... after an empty one
  p.bias = -10.0;
  const RefineResult r = refine_box(Box{7, 12, 30, 16}, m, p);
  CHECK(r.box == Box{5, 10, 35, 20});
}

TEST_CASE("refinement training lowers the loss") {
  std::mt19937_64 rng(6);
  std::vector<MbrmSample> samples;
  for (int i = 0; i < 30; ++i) {
    MbrmSample s;
    const double x = 8 + static_cast<double>(rng() % 8), y = 8 + static_cast<double>(rng() % 8);
    s.gt = Box{x, y, 20, 24};
    s.mask = Tensor({48, 48});
    for (std::size_t r = 0; r < 48; ++r) {
      for (std::size_t c = 0; c < 48; ++c) {
        s.mask[r * 48 + c] = pixel_in_region(s.gt, r, c) ? 0.9f : 0.05f;
      }
    }
    s.regressed = Box{x + static_cast<double>(rng() % 5) - 2, y + 1, 20, 22};
    samples.push_back(s);
  }
  MbrmTrainConfig cfg;
  cfg.iterations = 200;
  const auto rep = train_mbrm(samples, MbrmParams::zeros(), cfg);
  CHECK(rep.loss_history.size() == 200);
  CHECK(rep.loss_history.back() < 0.5 * rep.loss_history.front());
  CHECK_THROWS_AS(train_mbrm({}, MbrmParams::zeros(), cfg), std::invalid_argument);
}
