#pragma once

// Differentiable building blocks. Every forward op has a matching backward
// that maps an upstream gradient to gradients of its inputs. All functions
// are pure; they are instantiated for float (training) and double
// (gradient checking).

#include <cstddef>
#include <span>
#include <vector>

#include "recip/numerics/tensor.hpp"

namespace recip {

// ---- convolution ----------------------------------------------------------

/// Output extent of a zero-padded ("same") convolution with the given stride.
inline std::size_t conv_output_extent(std::size_t in, std::size_t stride) {
  return (in + stride - 1) / stride;
}

/// input C_in x H x W, kernel C_out x C_in x kh x kw (odd), optional bias
/// C_out. Zero padding of k/2 on each side; output C_out x ceil(H/s) x ceil(W/s).
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernel,
                      const BasicTensor<T>* bias = nullptr,
                      std::size_t stride = 1);

template <typename T>
struct Conv2dGrads {
  BasicTensor<T> input;   // empty when not requested
  BasicTensor<T> kernel;
  BasicTensor<T> bias;    // C_out
};

template <typename T>
Conv2dGrads<T> conv2d_backward(const BasicTensor<T>& input,
                               const BasicTensor<T>& kernel,
                               const BasicTensor<T>& grad_output,
                               std::size_t stride = 1,
                               bool need_input_grad = true);

/// out[i] = sum_{o=-s..s} kernel[o + s] * signal[i + o], zero outside.
template <typename T>
std::vector<T> conv1d(std::span<const T> signal, std::span<const T> kernel);

template <typename T>
struct Conv1dGrads {
  std::vector<T> signal;
  std::vector<T> kernel;
};

template <typename T>
Conv1dGrads<T> conv1d_backward(std::span<const T> signal,
                               std::span<const T> kernel,
                               std::span<const T> grad_output);

// ---- normalization and activations ----------------------------------------

/// Two-channel (fg, bg) softmax over a 2 x h x w logit map.
template <typename T>
BasicTensor<T> softmax_channels(const BasicTensor<T>& logits);

template <typename T>
BasicTensor<T> softmax_channels_backward(const BasicTensor<T>& probs,
                                         const BasicTensor<T>& grad_probs);

template <typename T>
T sigmoid(T x);

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> sigmoid_backward(const BasicTensor<T>& output,
                                const BasicTensor<T>& grad_output);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x);

/// Gradient passes where the forward output was positive.
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& output,
                             const BasicTensor<T>& grad_output);

// ---- losses -----------------------------------------------------------------

inline constexpr double kProbEpsilon = 1e-7;

template <typename T>
struct PixelLoss {
  T loss = 0;
  bool supervised = false;  // false when every weight is zero
  BasicTensor<T> grad;      // d loss / d fg_prob, same shape as fg_prob
};

/// Weighted mean binary cross-entropy over pixels with weight > 0.
/// Probabilities are clamped to [eps, 1 - eps] before the logarithm.
template <typename T>
PixelLoss<T> pixel_cross_entropy(const BasicTensor<T>& fg_prob,
                                 const BasicTensor<T>& target,
                                 const BasicTensor<T>& weight);

/// Per-anchor label values besides a class id >= 0.
inline constexpr int kLabelNegative = -1;
inline constexpr int kLabelIgnore = -2;

template <typename T>
struct FocalLoss {
  T loss = 0;
  std::size_t num_positive = 0;
  BasicTensor<T> grad;  // d loss / d logits
};

/// Sigmoid focal loss. logits: N x c, labels: N entries. Ignored anchors
/// contribute nothing; the sum is divided by max(1, #positive).
template <typename T>
FocalLoss<T> focal_loss(const BasicTensor<T>& logits, std::span<const int> labels,
                        double alpha, double gamma);

template <typename T>
struct SmoothL1 {
  T value = 0;
  std::vector<T> grad;
};

/// sum_i 0.5 x_i^2 if |x_i| < 1 else |x_i| - 0.5, with x = pred - target.
template <typename T>
SmoothL1<T> smooth_l1(std::span<const T> pred, std::span<const T> target);

// ---- resampling ---------------------------------------------------------------

/// Bilinear upsampling with sample-center (align_corners = false) convention.
template <typename T>
BasicTensor<T> bilinear_upsample(const BasicTensor<T>& map, std::size_t out_h,
                                 std::size_t out_w);

template <typename T>
BasicTensor<T> bilinear_upsample_backward(const BasicTensor<T>& grad_output,
                                          std::size_t in_h, std::size_t in_w);

}  // namespace recip
