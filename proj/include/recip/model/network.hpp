#pragma once

// Two-stream network: a shared convolutional backbone with a stride-4 level
// (pixel stream input) and a stride-8 level (object stream input). Each level
// appends the input image, average-pooled to its stride, to the conv features. The object
// stream has three parallel heads (classification, box regression, instance
// representation); the pixel stream is a small FCN producing a d-channel
// per-pixel representation map.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "recip/model/anchors.hpp"
#include "recip/numerics/param_store.hpp"
#include "recip/numerics/tensor.hpp"

namespace recip {

struct ModelConfig {
  int num_classes = 3;
  std::size_t repr_dim = 32;
  std::size_t stem_channels = 32;
  std::size_t backbone_channels = 64;
  std::size_t pixel_hidden = 256;
  std::size_t head_hidden = 256;
  AnchorConfig anchors;

  static constexpr std::size_t kPixelStride = 4;
  static constexpr std::size_t kObjectStride = 8;
  static constexpr std::size_t kImageChannels = 3;

  std::size_t k() const { return anchors.anchors_per_location(); }
  std::size_t cls_channels() const { return static_cast<std::size_t>(num_classes) * k(); }
  std::size_t reg_channels() const { return 4 * k(); }
  std::size_t repr_channels() const { return 2 * repr_dim * k(); }
};

/// Throws std::invalid_argument for inconsistent configurations.
void validate_model_config(const ModelConfig& cfg);

struct ConvSpec {
  std::string name;
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  bool relu = true;

  std::string weight_name() const { return name + ".weight"; }
  std::string bias_name() const { return name + ".bias"; }
};

template <typename T>
class Network {
 public:
  struct LayerCache {
    BasicTensor<T> input;
    BasicTensor<T> output;
  };

  struct Forward {
    BasicTensor<T> p4;    // stride-4 features, then the 4x4-pooled image
    BasicTensor<T> p8;    // stride-8 features, then the 8x8-pooled image
    BasicTensor<T> psi;   // d x h/4 x w/4 pixel representations
    BasicTensor<T> cls;   // c*k x h/8 x w/8 logits
    BasicTensor<T> reg;   // 4k x h/8 x w/8 offsets
    BasicTensor<T> repr;  // 2dk x h/8 x w/8 instance representations
    std::vector<LayerCache> caches;  // aligned with layers()
  };

  /// Empty tensors mean "no gradient from this output".
  struct OutputGrads {
    BasicTensor<T> psi, cls, reg, repr;
  };

  explicit Network(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }
  const std::vector<ConvSpec>& layers() const { return layers_; }

  /// Registers every layer's parameters with deterministic initial values.
  void init_params(BasicParamStore<T>& store, std::uint64_t seed) const;

  /// image: 3 x H x W, H and W divisible by 8.
  Forward forward(const BasicParamStore<T>& store, const BasicTensor<T>& image) const;

  /// Accumulates parameter gradients into `store`.
  void backward(BasicParamStore<T>& store, const Forward& fwd, const OutputGrads& grads) const;

 private:
  BasicTensor<T> run_layer(const BasicParamStore<T>& store, std::size_t layer,
                           const BasicTensor<T>& input, Forward& fwd) const;
  BasicTensor<T> back_layer(BasicParamStore<T>& store, std::size_t layer, const Forward& fwd,
                            const BasicTensor<T>& grad_output, bool need_input_grad) const;
  BasicTensor<T> back_chain(BasicParamStore<T>& store, std::size_t first, std::size_t last,
                            const Forward& fwd, BasicTensor<T> grad) const;

  ModelConfig cfg_;
  std::vector<ConvSpec> layers_;
  // Index ranges [begin, end) into layers_.
  std::size_t backbone_p4_end_ = 0, backbone_end_ = 0;
  std::size_t pixel_end_ = 0, cls_end_ = 0, reg_end_ = 0, repr_end_ = 0;
};

/// HWC [0,1] image to a centered 3 x H x W tensor.
template <typename T>
BasicTensor<T> image_to_tensor(const std::vector<float>& hwc, std::size_t height,
                               std::size_t width);

/// The 2 x d representation (fg row, bg row) of anchor slot `slot` at grid
/// cell (row, col); slot s occupies channels [2d s, 2d (s + 1)).
template <typename T>
BasicTensor<T> extract_object_repr(const BasicTensor<T>& repr_map, std::size_t row,
                                   std::size_t col, std::size_t slot, std::size_t repr_dim);

/// Adds a 2 x d gradient back into the matching channels of `grad_repr_map`.
template <typename T>
void scatter_object_repr_grad(BasicTensor<T>& grad_repr_map, std::size_t row, std::size_t col,
                              std::size_t slot, const BasicTensor<T>& grad_repr);

}  // namespace recip
