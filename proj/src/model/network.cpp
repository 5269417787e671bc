#include "recip/model/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <numbers>
#include <random>
#include <stdexcept>

#include "recip/numerics/ops.hpp"

namespace recip {
namespace {

// Box-Muller on raw mt19937_64 output keeps initialization independent of
// the standard library's distribution implementations.
class InitRng {
 public:
  explicit InitRng(std::uint64_t seed) : engine_(seed) {}

  double uniform01() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
  }

  double normal() {
    const double u1 = uniform01(), u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 engine_;
};

// Mean over non-overlapping factor x factor blocks.
template <typename T>
BasicTensor<T> avg_pool(const BasicTensor<T>& x, std::size_t factor) {
  const std::size_t c = x.dim(0), h = x.dim(1) / factor, w = x.dim(2) / factor;
  BasicTensor<T> out({c, h, w});
  const T inv = T{1} / static_cast<T>(factor * factor);
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t y = 0; y < h * factor; ++y) {
      for (std::size_t xx = 0; xx < w * factor; ++xx) out(k, y / factor, xx / factor) += x(k, y, xx) * inv;
    }
  }
  return out;
}

// Subtracts each channel's mean over the image.
template <typename T>
BasicTensor<T> center_channels(const BasicTensor<T>& x) {
  BasicTensor<T> out = x;
  const std::size_t plane = x.dim(1) * x.dim(2);
  for (std::size_t k = 0; k < x.dim(0); ++k) {
    T* p = out.ptr() + k * plane;
    const T mean = std::accumulate(p, p + plane, T{0}) / static_cast<T>(plane);
    for (std::size_t i = 0; i < plane; ++i) p[i] -= mean;
  }
  return out;
}

template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  BasicTensor<T> out({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)});
  std::copy(a.ptr(), a.ptr() + a.size(), out.ptr());
  std::copy(b.ptr(), b.ptr() + b.size(), out.ptr() + a.size());
  return out;
}

template <typename T>
BasicTensor<T> leading_channels(const BasicTensor<T>& x, std::size_t n) {
  BasicTensor<T> out({n, x.dim(1), x.dim(2)});
  std::copy(x.ptr(), x.ptr() + out.size(), out.ptr());
  return out;
}

}  // namespace

void validate_model_config(const ModelConfig& cfg) {
  if (cfg.num_classes < 1) throw std::invalid_argument("model num_classes must be >= 1");
  if (cfg.repr_dim == 0) throw std::invalid_argument("model repr_dim must be >= 1");
  if (cfg.k() == 0) throw std::invalid_argument("anchor scales and ratios must be non-empty");
  if (cfg.anchors.stride != ModelConfig::kObjectStride) {
    throw std::invalid_argument("anchor stride must equal the object stream stride (8)");
  }
  if (!cfg.stem_channels || !cfg.backbone_channels || !cfg.pixel_hidden || !cfg.head_hidden) {
    throw std::invalid_argument("model channel widths must be positive");
  }
}

template <typename T>
Network<T>::Network(ModelConfig cfg) : cfg_(std::move(cfg)) {
  validate_model_config(cfg_);
  const std::size_t stem = cfg_.stem_channels, ch = cfg_.backbone_channels;
  // Both levels carry the average-pooled input image after the conv features.
  const std::size_t level = ch + ModelConfig::kImageChannels;
  layers_ = {
      {"backbone.conv1", 3, stem, 3, 2, true},
      {"backbone.conv2", stem, ch, 3, 1, true},
      {"backbone.conv3", ch, ch, 3, 2, true},
      {"backbone.conv4", ch, ch, 3, 1, true},
  };
  backbone_p4_end_ = layers_.size();
  layers_.push_back({"backbone.conv5", level, ch, 3, 2, true});
  layers_.push_back({"backbone.conv6", ch, ch, 3, 1, true});
  backbone_end_ = layers_.size();

  layers_.push_back({"pixel.conv1", level, cfg_.pixel_hidden, 3, 1, true});
  layers_.push_back({"pixel.conv2", cfg_.pixel_hidden, cfg_.pixel_hidden, 3, 1, true});
  layers_.push_back({"pixel.proj", cfg_.pixel_hidden, cfg_.repr_dim, 1, 1, false});
  pixel_end_ = layers_.size();

  const std::size_t hh = cfg_.head_hidden;
  layers_.push_back({"object.cls.conv1", level, hh, 3, 1, true});
  layers_.push_back({"object.cls.conv2", hh, cfg_.cls_channels(), 3, 1, false});
  cls_end_ = layers_.size();
  layers_.push_back({"object.reg.conv1", level, hh, 3, 1, true});
  layers_.push_back({"object.reg.conv2", hh, cfg_.reg_channels(), 3, 1, false});
  reg_end_ = layers_.size();
  layers_.push_back({"object.repr.conv1", level, hh, 3, 1, true});
  layers_.push_back({"object.repr.conv2", hh, cfg_.repr_channels(), 3, 1, false});
  repr_end_ = layers_.size();
}

template <typename T>
void Network<T>::init_params(BasicParamStore<T>& store, std::uint64_t seed) const {
  InitRng rng(seed);
  for (const ConvSpec& spec : layers_) {
    const std::size_t fan_in = spec.in * spec.kernel * spec.kernel;
    double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
    double bias_value = 0.0;
    if (spec.name == "object.cls.conv2") {
      std_dev = 0.01;
      bias_value = -std::log((1.0 - 0.01) / 0.01);  // prior foreground probability 0.01
    } else if (spec.name == "object.reg.conv2") {
      std_dev = 0.01;
    } else if (!spec.relu) {
      std_dev = std::sqrt(1.0 / static_cast<double>(fan_in));
    }
    BasicTensor<T> w({spec.out, spec.in, spec.kernel, spec.kernel});
    for (auto& v : w.values()) v = static_cast<T>(rng.normal() * std_dev);
    store.add(spec.weight_name(), std::move(w));
    store.add(spec.bias_name(), BasicTensor<T>({spec.out}, static_cast<T>(bias_value)));
  }
}

template <typename T>
BasicTensor<T> Network<T>::run_layer(const BasicParamStore<T>& store, std::size_t layer,
                                     const BasicTensor<T>& input, Forward& fwd) const {
  const ConvSpec& spec = layers_[layer];
  BasicTensor<T> out = conv2d(input, store.value(spec.weight_name()),
                              &store.value(spec.bias_name()), spec.stride);
  if (spec.relu) {
    for (auto& v : out.values()) v = v > 0 ? v : T{0};
  }
  fwd.caches[layer] = {input, out};
  return out;
}

template <typename T>
typename Network<T>::Forward Network<T>::forward(const BasicParamStore<T>& store,
                                                 const BasicTensor<T>& image) const {
  require_rank(image, 3, "network input");
  if (image.dim(0) != 3 || image.dim(1) % 8 != 0 || image.dim(2) % 8 != 0) {
    throw ShapeError("network input must be 3 x H x W with H, W divisible by 8, got " +
                     shape_string(image.shape()));
  }
  Forward fwd;
  fwd.caches.resize(layers_.size());
  const BasicTensor<T> centered = center_channels(image);
  BasicTensor<T> x = centered;
  for (std::size_t i = 0; i < backbone_p4_end_; ++i) x = run_layer(store, i, x, fwd);
  fwd.p4 = concat_channels(x, avg_pool(centered, ModelConfig::kPixelStride));
  x = fwd.p4;
  for (std::size_t i = backbone_p4_end_; i < backbone_end_; ++i) x = run_layer(store, i, x, fwd);
  fwd.p8 = concat_channels(x, avg_pool(centered, ModelConfig::kObjectStride));

  x = fwd.p4;
  for (std::size_t i = backbone_end_; i < pixel_end_; ++i) x = run_layer(store, i, x, fwd);
  fwd.psi = std::move(x);

  auto head = [&](std::size_t begin, std::size_t end) {
    BasicTensor<T> h = fwd.p8;
    for (std::size_t i = begin; i < end; ++i) h = run_layer(store, i, h, fwd);
    return h;
  };
  fwd.cls = head(pixel_end_, cls_end_);
  fwd.reg = head(cls_end_, reg_end_);
  fwd.repr = head(reg_end_, repr_end_);
  return fwd;
}

template <typename T>
BasicTensor<T> Network<T>::back_layer(BasicParamStore<T>& store, std::size_t layer,
                                      const Forward& fwd, const BasicTensor<T>& grad_output,
                                      bool need_input_grad) const {
  const ConvSpec& spec = layers_[layer];
  const LayerCache& cache = fwd.caches[layer];
  const BasicTensor<T>& grad_pre = spec.relu ? relu_backward(cache.output, grad_output) : grad_output;
  auto grads = conv2d_backward(cache.input, store.value(spec.weight_name()), grad_pre,
                               spec.stride, need_input_grad);
  store.accumulate(spec.weight_name(), grads.kernel);
  store.accumulate(spec.bias_name(), grads.bias);
  return std::move(grads.input);
}

template <typename T>
BasicTensor<T> Network<T>::back_chain(BasicParamStore<T>& store, std::size_t first,
                                      std::size_t last, const Forward& fwd,
                                      BasicTensor<T> grad) const {
  for (std::size_t i = last; i-- > first;) grad = back_layer(store, i, fwd, grad, true);
  return grad;
}

template <typename T>
void Network<T>::backward(BasicParamStore<T>& store, const Forward& fwd,
                          const OutputGrads& grads) const {
  BasicTensor<T> grad_p8(fwd.p8.shape());
  bool any_p8 = false;
  auto add_into = [](BasicTensor<T>& acc, const BasicTensor<T>& g) {
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
  };
  const std::pair<const BasicTensor<T>*, std::pair<std::size_t, std::size_t>> heads[] = {
      {&grads.cls, {pixel_end_, cls_end_}},
      {&grads.reg, {cls_end_, reg_end_}},
      {&grads.repr, {reg_end_, repr_end_}},
  };
  for (const auto& [g, range] : heads) {
    if (g->empty()) continue;
    add_into(grad_p8, back_chain(store, range.first, range.second, fwd, *g));
    any_p8 = true;
  }

  BasicTensor<T> grad_p4(fwd.p4.shape());
  bool any_p4 = false;
  if (!grads.psi.empty()) {
    add_into(grad_p4, back_chain(store, backbone_end_, pixel_end_, fwd, grads.psi));
    any_p4 = true;
  }
  const std::size_t ch = cfg_.backbone_channels;
  if (any_p8) {
    add_into(grad_p4, back_chain(store, backbone_p4_end_, backbone_end_, fwd,
                                 leading_channels(grad_p8, ch)));
    any_p4 = true;
  }
  if (!any_p4) return;
  // Image channels of the levels and the first layer's input need no gradient.
  BasicTensor<T> g = back_chain(store, 1, backbone_p4_end_, fwd, leading_channels(grad_p4, ch));
  back_layer(store, 0, fwd, g, false);
}

template <typename T>
BasicTensor<T> image_to_tensor(const std::vector<float>& hwc, std::size_t height,
                               std::size_t width) {
  if (hwc.size() != height * width * 3) {
    throw ShapeError("image buffer length does not match " + std::to_string(height) + "x" +
                     std::to_string(width) + "x3");
  }
  BasicTensor<T> t({3, height, width});
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        t(c, y, x) = static_cast<T>(hwc[(y * width + x) * 3 + c] - 0.5f);
      }
    }
  }
  return t;
}

template <typename T>
BasicTensor<T> extract_object_repr(const BasicTensor<T>& repr_map, std::size_t row,
                                   std::size_t col, std::size_t slot, std::size_t repr_dim) {
  require_rank(repr_map, 3, "extract_object_repr");
  const std::size_t per_slot = 2 * repr_dim;
  if (repr_dim == 0 || repr_map.dim(0) % per_slot != 0) {
    throw ShapeError("extract_object_repr: " + std::to_string(repr_map.dim(0)) +
                     " channels are not a multiple of 2d = " + std::to_string(per_slot));
  }
  const std::size_t k = repr_map.dim(0) / per_slot;
  if (row >= repr_map.dim(1) || col >= repr_map.dim(2) || slot >= k) {
    throw std::out_of_range("extract_object_repr: cell (" + std::to_string(row) + ", " +
                            std::to_string(col) + ") slot " + std::to_string(slot) +
                            " outside map " + shape_string(repr_map.shape()));
  }
  BasicTensor<T> out({2, repr_dim});
  for (std::size_t i = 0; i < per_slot; ++i) out[i] = repr_map(per_slot * slot + i, row, col);
  return out;
}

template <typename T>
void scatter_object_repr_grad(BasicTensor<T>& grad_repr_map, std::size_t row, std::size_t col,
                              std::size_t slot, const BasicTensor<T>& grad_repr) {
  const std::size_t per_slot = grad_repr.size();
  for (std::size_t i = 0; i < per_slot; ++i) {
    grad_repr_map(per_slot * slot + i, row, col) += grad_repr[i];
  }
}

template class Network<float>;
template class Network<double>;
template BasicTensor<float> image_to_tensor(const std::vector<float>&, std::size_t, std::size_t);
template BasicTensor<double> image_to_tensor(const std::vector<float>&, std::size_t, std::size_t);
template BasicTensor<float> extract_object_repr(const BasicTensor<float>&, std::size_t,
                                                std::size_t, std::size_t, std::size_t);
template BasicTensor<double> extract_object_repr(const BasicTensor<double>&, std::size_t,
                                                 std::size_t, std::size_t, std::size_t);
template void scatter_object_repr_grad(BasicTensor<float>&, std::size_t, std::size_t,
                                       std::size_t, const BasicTensor<float>&);
template void scatter_object_repr_grad(BasicTensor<double>&, std::size_t, std::size_t,
                                       std::size_t, const BasicTensor<double>&);

}  // namespace recip
