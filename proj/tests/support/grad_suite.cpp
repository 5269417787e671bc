#include "grad_suite.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>

#include "recip/corr_crop/corr_crop.hpp"
#include "recip/datagen/scene.hpp"
#include "recip/mbrm/mbrm.hpp"
#include "recip/model/anchors.hpp"
#include "recip/model/network.hpp"
#include "recip/numerics/grad_check.hpp"
#include "recip/numerics/ops.hpp"
#include "recip/pipeline/train.hpp"

namespace recip::testing {
namespace {

using Vec = std::vector<double>;
using Fn = std::function<double(std::span<const double>)>;

double check(const Fn& f, std::span<const double> x, std::span<const double> analytic) {
  return grad_check(f, x, analytic, kGradEps, kGradFloor).max_rel_error;
}

struct Rng {
  std::mt19937_64 gen;
  explicit Rng(std::uint64_t seed) : gen(seed * 0x9E3779B97F4A7C15ULL + 17) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<>(lo, hi)(gen); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<>(lo, hi)(gen); }
  TensorD tensor(Shape shape, double lo = -1.0, double hi = 1.0) {
    TensorD t(std::move(shape));
    for (auto& v : t.raw()) v = uniform(lo, hi);
    return t;
  }
  // Magnitudes in [lo, hi] with a random sign.
  double away_from_zero(double lo, double hi) {
    return (integer(0, 1) ? 1.0 : -1.0) * uniform(lo, hi);
  }
};

TensorD with(const TensorD& like, std::span<const double> x) {
  return TensorD(like.shape(), Vec(x.begin(), x.end()));
}

double dot(const TensorD& a, const TensorD& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double conv2d_case(std::uint64_t seed, std::size_t stride) {
  Rng rng(seed);
  const TensorD input = rng.tensor({2, 7, 6});
  const TensorD kernel = rng.tensor({3, 2, 3, 3});
  const TensorD bias = rng.tensor({3});
  const TensorD probe = rng.tensor({3, conv_output_extent(7, stride), conv_output_extent(6, stride)});
  const auto loss = [&](const TensorD& in, const TensorD& k, const TensorD& b) {
    return dot(conv2d(in, k, &b, stride), probe);
  };
  const auto g = conv2d_backward(input, kernel, probe, stride);
  double worst = check([&](auto x) { return loss(with(input, x), kernel, bias); }, input.raw(),
                       g.input.raw());
  worst = std::max(worst, check([&](auto x) { return loss(input, with(kernel, x), bias); },
                                kernel.raw(), g.kernel.raw()));
  return std::max(worst, check([&](auto x) { return loss(input, kernel, with(bias, x)); },
                               bias.raw(), g.bias.raw()));
}

double conv1d_case(std::uint64_t seed) {
  Rng rng(seed);
  const TensorD signal = rng.tensor({12});
  const TensorD kernel = rng.tensor({9});
  const TensorD probe = rng.tensor({12});
  const auto loss = [&](std::span<const double> s, std::span<const double> k) {
    return dot(TensorD({12}, conv1d(s, k)), probe);
  };
  const auto g = conv1d_backward<double>(signal.raw(), kernel.raw(), probe.raw());
  return std::max(check([&](auto x) { return loss(x, kernel.raw()); }, signal.raw(), g.signal),
                  check([&](auto x) { return loss(signal.raw(), x); }, kernel.raw(), g.kernel));
}

double softmax_case(std::uint64_t seed) {
  Rng rng(seed);
  const TensorD logits = rng.tensor({2, 3, 4}, -3, 3);
  const TensorD probe = rng.tensor({2, 3, 4});
  const auto g = softmax_channels_backward(softmax_channels(logits), probe);
  return check([&](auto x) { return dot(softmax_channels(with(logits, x)), probe); },
               logits.raw(), g.raw());
}

double sigmoid_case(std::uint64_t seed) {
  Rng rng(seed);
  const TensorD x0 = rng.tensor({2, 3, 4}, -4, 4);
  const TensorD probe = rng.tensor({2, 3, 4});
  const auto g = sigmoid_backward(sigmoid(x0), probe);
  return check([&](auto x) { return dot(sigmoid(with(x0, x)), probe); }, x0.raw(), g.raw());
}

double relu_case(std::uint64_t seed) {
  Rng rng(seed);
  TensorD x0({2, 3, 4});
  for (auto& v : x0.raw()) v = rng.away_from_zero(0.2, 2.0);
  const TensorD probe = rng.tensor({2, 3, 4});
  const auto g = relu_backward(relu(x0), probe);
  return check([&](auto x) { return dot(relu(with(x0, x)), probe); }, x0.raw(), g.raw());
}

double pixel_ce_case(std::uint64_t seed) {
  Rng rng(seed);
  const TensorD prob = rng.tensor({1, 4, 5}, 0.05, 0.95);
  TensorD target({1, 4, 5}), weight({1, 4, 5});
  for (std::size_t i = 0; i < target.size(); ++i) {
    target[i] = rng.integer(0, 1);
    weight[i] = rng.integer(0, 2);
  }
  weight[0] = 1;
  const auto r = pixel_cross_entropy(prob, target, weight);
  return check([&](auto x) { return pixel_cross_entropy(with(prob, x), target, weight).loss; },
               prob.raw(), r.grad.raw());
}

double focal_case(std::uint64_t seed) {
  Rng rng(seed);
  const TensorD logits = rng.tensor({8, 3}, -3, 3);
  std::vector<int> labels(8);
  for (auto& l : labels) l = rng.integer(-2, 2);
  labels[0] = 1;
  const auto r = focal_loss(logits, std::span<const int>(labels), 0.25, 2.0);
  return check(
      [&](auto x) { return focal_loss(with(logits, x), std::span<const int>(labels), 0.25, 2.0).loss; },
      logits.raw(), r.grad.raw());
}

double smooth_l1_case(std::uint64_t seed) {
  Rng rng(seed);
  Vec pred(8), target(8);
  for (std::size_t i = 0; i < 8; ++i) {
    target[i] = rng.uniform(-2, 2);
    const double diff = i % 2 ? rng.away_from_zero(0.05, 0.8) : rng.away_from_zero(1.2, 3.0);
    pred[i] = target[i] + diff;
  }
  const auto r = smooth_l1<double>(pred, target);
  return check([&](auto x) { return smooth_l1<double>(x, target).value; }, pred, r.grad);
}

double bilinear_case(std::uint64_t seed) {
  Rng rng(seed);
  const TensorD map = rng.tensor({2, 3, 4});
  const TensorD probe = rng.tensor({2, 9, 10});
  const auto g = bilinear_upsample_backward(probe, 3, 4);
  return check([&](auto x) { return dot(bilinear_upsample(with(map, x), 9, 10), probe); },
               map.raw(), g.raw());
}

double correlate_case(std::uint64_t seed) {
  Rng rng(seed);
  const TensorD psi = rng.tensor({4, 5, 6});
  const TensorD phi = rng.tensor({2, 4});
  const TensorD probe = rng.tensor({2, 5, 6});
  const auto g = correlate_backward(psi, phi, correlate(psi, phi), probe);
  return std::max(
      check([&](auto x) { return dot(correlate(with(psi, x), phi), probe); }, psi.raw(),
            g.psi.raw()),
      check([&](auto x) { return dot(correlate(psi, with(phi, x)), probe); }, phi.raw(),
            g.phi.raw()));
}

// Correlation followed by the OHEM-balanced mask loss, as in training.
double mask_loss_case(std::uint64_t seed) {
  Rng rng(seed);
  const TensorD psi = rng.tensor({4, 8, 8}, -2, 2);
  const TensorD phi = rng.tensor({2, 4});
  BinaryMask gt(8, 8);
  const std::size_t r0 = static_cast<std::size_t>(rng.integer(1, 3));
  const std::size_t c0 = static_cast<std::size_t>(rng.integer(1, 3));
  for (std::size_t r = r0; r < r0 + 3; ++r) {
    for (std::size_t c = c0; c < c0 + 3; ++c) gt(r, c) = 1;
  }
  const Box box{4.0 * c0, 4.0 * r0, 12.0, 12.0};
  const auto loss_of = [&](const TensorD& ps, const TensorD& ph) {
    const TensorD sim = correlate(ps, ph);
    return mask_training_loss<double>({{&sim, &gt, box}}).loss;
  };
  const TensorD sim = correlate(psi, phi);
  const auto r = mask_training_loss<double>({{&sim, &gt, box}});
  if (r.used != 1) throw std::logic_error("mask_loss case: object skipped");
  const auto g = correlate_backward(psi, phi, sim, r.grads[0]);
  return std::max(check([&](auto x) { return loss_of(with(psi, x), phi); }, psi.raw(), g.psi.raw()),
                  check([&](auto x) { return loss_of(psi, with(phi, x)); }, phi.raw(), g.phi.raw()));
}

double mbrm_case(std::uint64_t seed) {
  Rng rng(seed);
  MbrmSample sample;
  const std::size_t n = 24;
  sample.gt = Box{static_cast<double>(rng.integer(3, 7)), static_cast<double>(rng.integer(3, 7)),
                  static_cast<double>(rng.integer(8, 12)), static_cast<double>(rng.integer(8, 12))};
  sample.mask = Tensor({n, n});
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const bool in = pixel_in_region(sample.gt, r, c);
      sample.mask[r * n + c] = static_cast<float>(in ? rng.uniform(0.6, 1.0) : rng.uniform(0.0, 0.4));
    }
  }
  sample.regressed = Box{sample.gt.x + rng.integer(-2, 2), sample.gt.y + rng.integer(-2, 2),
                         sample.gt.w + rng.integer(-2, 2), sample.gt.h + rng.integer(-2, 2)};
  MbrmParams params = MbrmParams::zeros(4, 0.2);
  for (auto& k : params.kernel) k = rng.uniform(-1, 1);
  params.bias = rng.uniform(-0.5, 0.5);

  const auto loss_of = [&](std::span<const double> x) {
    MbrmParams p = params;
    std::copy(x.begin(), x.end() - 1, p.kernel.begin());
    p.bias = x.back();
    return mbrm_loss(sample, p).loss;
  };
  Vec x0 = params.kernel;
  x0.push_back(params.bias);
  const MbrmLoss r = mbrm_loss(sample, params);
  Vec analytic = r.grad_kernel;
  analytic.push_back(r.grad_bias);
  return check(loss_of, x0, analytic);
}

// Whole network through the training loss, on a small configuration.
double network_case(std::uint64_t seed) {
  ModelConfig mc;
  mc.num_classes = 3;
  mc.repr_dim = 4;
  mc.stem_channels = 4;
  mc.backbone_channels = 6;
  mc.pixel_hidden = 8;
  mc.head_hidden = 6;
  mc.anchors.scales = {12.0, 20.0};
  SceneConfig sc;
  sc.image_size = 32;
  sc.min_instances = 1;
  sc.max_instances = 2;
  sc.min_size_fraction = 0.3;
  sc.max_size_fraction = 0.7;
  const SceneSample scene = generate_scene(seed, sc);
  const AnchorGrid grid = generate_anchors(mc.anchors, 32, 32);
  TrainConfig tc;

  const Network<double> net(mc);
  BasicParamStore<double> store;
  net.init_params(store, seed);
  // Larger weights than the initializer so every term carries signal.
  Rng rng(seed);
  for (auto& e : store.entries()) {
    for (auto& v : e.value.raw()) v += rng.uniform(-0.05, 0.05);
  }
  const TensorD image = image_to_tensor<double>(scene.image, 32, 32);
  const auto total = [&](const BasicParamStore<double>& s) {
    const auto fwd = net.forward(s, image);
    return image_loss<double>(fwd, grid, scene, mc, tc).terms.total;
  };
  const auto fwd = net.forward(store, image);
  const auto loss = image_loss<double>(fwd, grid, scene, mc, tc);
  store.zero_grad();
  net.backward(store, fwd, loss.grads);

  // On/off state of every ReLU plus the hard-example selection. A finite
  // difference is only meaningful when the +-eps perturbation leaves both
  // unchanged.
  const auto kink_state = [&](const BasicParamStore<double>& s) {
    const auto f = net.forward(s, image);
    std::vector<bool> on;
    for (std::size_t l = 0; l < f.caches.size(); ++l) {
      if (!net.layers()[l].relu) continue;
      for (double v : f.caches[l].output.raw()) on.push_back(v > 0.0);
    }
    for (const auto& w : image_loss<double>(f, grid, scene, mc, tc).mask_weights) {
      for (double v : w.raw()) on.push_back(v > 0.0);
    }
    return on;
  };
  const std::vector<bool> base = kink_state(store);

  double worst = 0;
  for (auto& e : store.entries()) {
    // A few distinct entries per tensor, skipping points next to a kink.
    std::vector<std::size_t> order(e.value.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng.gen);
    BasicParamStore<double> probe = store;
    auto& target = probe.value(e.name);
    std::vector<std::size_t> idx;
    for (std::size_t i : order) {
      if (idx.size() == 3) break;
      bool smooth = true;
      for (double step : {kGradEps, -kGradEps}) {
        target[i] = e.value[i] + step;
        smooth = smooth && kink_state(probe) == base;
      }
      target[i] = e.value[i];
      if (smooth) idx.push_back(i);
    }
    if (idx.empty()) continue;
    Vec x0, analytic;
    for (auto i : idx) {
      x0.push_back(e.value[i]);
      analytic.push_back(e.grad[i]);
    }
    worst = std::max(worst, check(
                                [&](std::span<const double> x) {
                                  for (std::size_t j = 0; j < idx.size(); ++j) target[idx[j]] = x[j];
                                  return total(probe);
                                },
                                x0, analytic));
  }
  return worst;
}

const std::vector<std::pair<std::string, std::function<double(std::uint64_t)>>>& cases() {
  static const std::vector<std::pair<std::string, std::function<double(std::uint64_t)>>> all = {
      {"conv2d stride 1", [](std::uint64_t s) { return conv2d_case(s, 1); }},
      {"conv2d stride 2", [](std::uint64_t s) { return conv2d_case(s, 2); }},
      {"conv1d", conv1d_case},
      {"softmax", softmax_case},
      {"sigmoid", sigmoid_case},
      {"relu", relu_case},
      {"pixel cross-entropy", pixel_ce_case},
      {"focal loss", focal_case},
      {"smooth L1", smooth_l1_case},
      {"bilinear upsample", bilinear_case},
      {"correlate", correlate_case},
      {"mask loss", mask_loss_case},
      {"boundary refinement loss", mbrm_case},
      {"network + training loss", network_case},
  };
  return all;
}

}  // namespace

std::vector<std::string> grad_case_names() {
  std::vector<std::string> names;
  for (const auto& c : cases()) names.push_back(c.first);
  return names;
}

GradCaseResult run_grad_case(const std::string& name, std::uint64_t seed) {
  for (const auto& c : cases()) {
    if (c.first == name) return {name, seed, c.second(seed)};
  }
  throw std::invalid_argument("unknown gradient case '" + name + "'");
}

}  // namespace recip::testing
