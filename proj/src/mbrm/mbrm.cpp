#include "recip/mbrm/mbrm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>

#include "recip/numerics/ops.hpp"
#include "recip/numerics/param_store.hpp"

namespace recip {
namespace {

bool is_mirrored(Side side) { return side == Side::kRight || side == Side::kBottom; }

double log_sigmoid(double x) {
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

std::size_t nearest_index(double x, std::size_t n) {
  const double r = std::round(x);
  if (r <= 0.0) return 0;
  return std::min(static_cast<std::size_t>(r), n - 1);
}

// Pre-sigmoid likelihood logits in the side's own frame (reversed for
// right/bottom), i.e. every side is treated as a "left" side.
std::vector<double> side_frame_profile(std::span<const double> profile, Side side) {
  std::vector<double> p(profile.begin(), profile.end());
  if (is_mirrored(side)) std::reverse(p.begin(), p.end());
  return p;
}

std::vector<double> likelihood_logits(const std::vector<double>& frame_profile,
                                      const MbrmParams& params) {
  std::vector<double> z = conv1d<double>(frame_profile, params.kernel);
  for (auto& v : z) v += params.bias;
  return z;
}

struct SideTerm {
  Side side;
  std::size_t profile_index;  // 0: horizontal, 1: vertical
  double center;
  double extent;
  double gt;
};

}  // namespace

MbrmParams MbrmParams::zeros(std::size_t scope, double gamma) {
  if (scope < 1) throw std::invalid_argument("MBRM influence scope must be >= 1");
  if (gamma < 0.0) throw std::invalid_argument("MBRM gamma must be >= 0");
  MbrmParams p;
  p.kernel.assign(2 * scope + 1, 0.0);
  p.gamma = gamma;
  return p;
}

std::vector<double> boundary_profile(const Tensor& mask, Axis axis) {
  std::size_t h = 0, w = 0;
  if (mask.rank() == 2) {
    h = mask.dim(0);
    w = mask.dim(1);
  } else if (mask.rank() == 3 && mask.dim(0) == 1) {
    h = mask.dim(1);
    w = mask.dim(2);
  } else {
    throw ShapeError("boundary_profile: expected h x w or 1 x h x w, got " +
                     shape_string(mask.shape()));
  }
  const float* m = mask.ptr();
  if (axis == Axis::kHorizontal) {
    std::vector<double> prof(w, -std::numeric_limits<double>::infinity());
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) prof[c] = std::max(prof[c], static_cast<double>(m[r * w + c]));
    }
    return prof;
  }
  std::vector<double> prof(h, -std::numeric_limits<double>::infinity());
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) prof[r] = std::max(prof[r], static_cast<double>(m[r * w + c]));
  }
  return prof;
}

std::vector<double> boundary_likelihood(std::span<const double> profile,
                                        const MbrmParams& params, Side side) {
  std::vector<double> z = likelihood_logits(side_frame_profile(profile, side), params);
  for (auto& v : z) v = sigmoid(v);
  if (is_mirrored(side)) std::reverse(z.begin(), z.end());
  return z;
}

std::vector<double> boundary_prior(double center, double extent, double gamma, std::size_t n) {
  if (n == 0) throw std::invalid_argument("boundary_prior: n must be >= 1");
  std::vector<double> prior(n, 0.0);
  const double sigma = gamma * extent;
  if (!(sigma >= kMinPriorSigma)) {
    prior[nearest_index(center, n)] = 1.0;
    return prior;
  }
  const double inv = 1.0 / (2.0 * sigma * sigma);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(i) - center;
    prior[i] = std::exp(-d * d * inv);
    sum += prior[i];
  }
  if (!(sum > 0.0)) {
    // Centre far outside [0, n): the mass collapses onto the nearest end.
    std::fill(prior.begin(), prior.end(), 0.0);
    prior[nearest_index(center, n)] = 1.0;
    return prior;
  }
  for (auto& v : prior) v /= sum;
  return prior;
}

BoundaryDistribution boundary_posterior(std::span<const double> prior,
                                        std::span<const double> likelihood) {
  if (prior.size() != likelihood.size() || prior.empty()) {
    throw ShapeError("boundary_posterior: prior and likelihood lengths differ");
  }
  BoundaryDistribution d;
  d.posterior.resize(prior.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < prior.size(); ++i) {
    d.posterior[i] = prior[i] * likelihood[i];
    sum += d.posterior[i];
  }
  if (!(sum > 0.0) || !std::isfinite(sum)) {
    d.degenerate = true;
    d.posterior.assign(prior.begin(), prior.end());
  } else {
    for (auto& v : d.posterior) v /= sum;
  }
  d.argmax = static_cast<std::size_t>(
      std::max_element(d.posterior.begin(), d.posterior.end()) - d.posterior.begin());
  return d;
}

std::array<double, 4> box_sides(const Box& b) {
  return {b.x, b.x + b.w - 1.0, b.y, b.y + b.h - 1.0};
}

RefineResult refine_box(const Box& regressed, const Tensor& mask, const MbrmParams& params) {
  RefineResult result;
  result.box = regressed;
  if (params.gamma == 0.0) return result;

  const std::vector<double> prof_x = boundary_profile(mask, Axis::kHorizontal);
  const std::vector<double> prof_y = boundary_profile(mask, Axis::kVertical);
  const bool any = std::any_of(prof_x.begin(), prof_x.end(), [](double v) { return v > 0.0; });
  if (!any) {
    result.no_evidence = true;
    return result;
  }

  const double width = static_cast<double>(prof_x.size());
  const double height = static_cast<double>(prof_y.size());
  const Box box = clip_box(regressed, width, height);
  const auto sides = box_sides(box);

  auto solve = [&](const std::vector<double>& prof, double center, double extent, Side side) {
    const auto prior = boundary_prior(center, extent, params.gamma, prof.size());
    const auto like = boundary_likelihood(prof, params, side);
    return boundary_posterior(prior, like).argmax;
  };

  Box out = box;
  const std::size_t left = solve(prof_x, sides[0], box.w, Side::kLeft);
  const std::size_t right = solve(prof_x, sides[1], box.w, Side::kRight);
  if (left >= right) {
    result.axis_fallback[0] = true;
  } else {
    out.x = static_cast<double>(left);
    out.w = static_cast<double>(right - left + 1);
  }
  const std::size_t top = solve(prof_y, sides[2], box.h, Side::kTop);
  const std::size_t bottom = solve(prof_y, sides[3], box.h, Side::kBottom);
  if (top >= bottom) {
    result.axis_fallback[1] = true;
  } else {
    out.y = static_cast<double>(top);
    out.h = static_cast<double>(bottom - top + 1);
  }
  result.sides = {left, right, top, bottom};
  result.box = out;
  return result;
}

MbrmLoss mbrm_loss(const MbrmSample& sample, const MbrmParams& params) {
  MbrmLoss result;
  result.grad_kernel.assign(params.kernel.size(), 0.0);
  const std::array<std::vector<double>, 2> profiles = {
      boundary_profile(sample.mask, Axis::kHorizontal),
      boundary_profile(sample.mask, Axis::kVertical)};
  const Box box = clip_box(sample.regressed, static_cast<double>(profiles[0].size()),
                           static_cast<double>(profiles[1].size()));
  const auto reg = box_sides(box);
  const auto gt = box_sides(sample.gt);
  const SideTerm terms[4] = {
      {Side::kLeft, 0, reg[0], box.w, gt[0]},
      {Side::kRight, 0, reg[1], box.w, gt[1]},
      {Side::kTop, 1, reg[2], box.h, gt[2]},
      {Side::kBottom, 1, reg[3], box.h, gt[3]},
  };

  double total = 0.0;
  for (const SideTerm& t : terms) {
    const double sigma = params.gamma * t.extent;
    if (!(sigma >= kMinPriorSigma)) continue;  // one-hot prior: nothing to learn
    const std::vector<double> p = side_frame_profile(profiles[t.profile_index], t.side);
    const std::size_t n = p.size();
    double center = t.center;
    std::size_t target = nearest_index(t.gt, n);
    if (is_mirrored(t.side)) {
      center = static_cast<double>(n - 1) - center;
      target = n - 1 - target;
    }
    const std::vector<double> z = likelihood_logits(p, params);
    std::vector<double> a(n);
    const double inv = 1.0 / (2.0 * sigma * sigma);
    for (std::size_t i = 0; i < n; ++i) {
      const double d = static_cast<double>(i) - center;
      a[i] = -d * d * inv + log_sigmoid(z[i]);
    }
    const double amax = *std::max_element(a.begin(), a.end());
    double s = 0.0;
    for (double v : a) s += std::exp(v - amax);
    const double lse = amax + std::log(s);
    total += lse - a[target];

    std::vector<double> dz(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double post = std::exp(a[i] - lse);
      dz[i] = (post - (i == target ? 1.0 : 0.0)) * (1.0 - sigmoid(z[i]));
      result.grad_bias += dz[i];
    }
    const auto g = conv1d_backward<double>(p, params.kernel, dz);
    for (std::size_t j = 0; j < g.kernel.size(); ++j) result.grad_kernel[j] += g.kernel[j];
    ++result.sides;
  }
  if (result.sides) {
    const double inv = 1.0 / static_cast<double>(result.sides);
    result.loss = total * inv;
    for (auto& g : result.grad_kernel) g *= inv;
    result.grad_bias *= inv;
  }
  return result;
}

MbrmTrainReport train_mbrm(const std::vector<MbrmSample>& samples, MbrmParams init,
                           const MbrmTrainConfig& cfg) {
  if (samples.empty()) throw std::invalid_argument("train_mbrm: empty sample set");
  if (init.kernel.empty() || init.kernel.size() % 2 == 0) {
    throw std::invalid_argument("train_mbrm: kernel length must be odd and >= 3");
  }
  BasicParamStore<double> store;
  store.add("mbrm.kernel", TensorD({init.kernel.size()}, init.kernel));
  store.add("mbrm.bias", TensorD({1}, init.bias));

  MbrmTrainReport report;
  report.params = init;
  std::mt19937_64 rng(cfg.seed);
  const std::size_t batch = std::max<std::size_t>(1, cfg.batch_size);
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    MbrmParams& p = report.params;
    p.kernel.assign(store.value("mbrm.kernel").raw().begin(), store.value("mbrm.kernel").raw().end());
    p.bias = store.value("mbrm.bias")[0];
    TensorD gk({p.kernel.size()});
    TensorD gb({1});
    double loss = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const MbrmSample& s = samples[rng() % samples.size()];
      const MbrmLoss l = mbrm_loss(s, p);
      loss += l.loss;
      for (std::size_t j = 0; j < gk.size(); ++j) gk[j] += l.grad_kernel[j] / static_cast<double>(batch);
      gb[0] += l.grad_bias / static_cast<double>(batch);
    }
    report.loss_history.push_back(loss / static_cast<double>(batch));
    store.accumulate("mbrm.kernel", gk);
    store.accumulate("mbrm.bias", gb);
    sgd_step(store, cfg.lr, cfg.momentum);
  }
  report.params.kernel.assign(store.value("mbrm.kernel").raw().begin(), store.value("mbrm.kernel").raw().end());
  report.params.bias = store.value("mbrm.bias")[0];
  return report;
}

}  // namespace recip
