#include "recip/numerics/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

namespace recip {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

struct ConvGeometry {
  std::size_t channels, height, width;
  std::size_t kh, kw, stride;
  std::size_t out_h, out_w;

  std::size_t patch() const { return channels * kh * kw; }
  std::size_t positions() const { return out_h * out_w; }
  bool is_pointwise() const { return kh == 1 && kw == 1 && stride == 1; }
};

template <typename T>
ConvGeometry conv_geometry(const BasicTensor<T>& input,
                           const BasicTensor<T>& kernel, std::size_t stride) {
  require_rank(input, 3, "conv2d input");
  require_rank(kernel, 4, "conv2d kernel");
  if (kernel.dim(1) != input.dim(0)) {
    throw ShapeError("conv2d: kernel " + shape_string(kernel.shape()) +
                     " expects " + std::to_string(kernel.dim(1)) +
                     " input channels, input is " + shape_string(input.shape()));
  }
  if (kernel.dim(2) % 2 == 0 || kernel.dim(3) % 2 == 0) {
    throw ShapeError("conv2d: kernel extents must be odd, got " +
                     shape_string(kernel.shape()));
  }
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), kernel.dim(2),
                 kernel.dim(3), stride, 0, 0};
  g.out_h = conv_output_extent(g.height, stride);
  g.out_w = conv_output_extent(g.width, stride);
  return g;
}

template <typename T>
AlignedVector<T> im2col(const T* input, const ConvGeometry& g) {
  AlignedVector<T> cols(g.patch() * g.positions(), T{0});
  const long ph = static_cast<long>(g.kh / 2), pw = static_cast<long>(g.kw / 2);
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const T* plane = input + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx, ++row) {
        T* dst = cols.data() + row * g.positions();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - ph;
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          const T* src_row = plane + iy * g.width;
          T* dst_row = dst + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - pw;
            if (ix >= 0 && ix < static_cast<long>(g.width)) dst_row[ox] = src_row[ix];
          }
        }
      }
    }
  }
  return cols;
}

template <typename T>
void col2im(const T* cols, const ConvGeometry& g, T* input_grad) {
  const long ph = static_cast<long>(g.kh / 2), pw = static_cast<long>(g.kw / 2);
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.channels; ++c) {
    T* plane = input_grad + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.kh; ++ky) {
      for (std::size_t kx = 0; kx < g.kw; ++kx, ++row) {
        const T* src = cols + row * g.positions();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - ph;
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          T* dst_row = plane + iy * g.width;
          const T* src_row = src + oy * g.out_w;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - pw;
            if (ix >= 0 && ix < static_cast<long>(g.width)) dst_row[ix] += src_row[ox];
          }
        }
      }
    }
  }
}

template <typename T>
T clamp_prob(T p) {
  return std::clamp(p, static_cast<T>(kProbEpsilon), static_cast<T>(1.0 - kProbEpsilon));
}

// log(sigmoid(x)) without overflow.
template <typename T>
T log_sigmoid(T x) {
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernel,
                      const BasicTensor<T>* bias, std::size_t stride) {
  const ConvGeometry g = conv_geometry(input, kernel, stride);
  const std::size_t c_out = kernel.dim(0);
  if (bias) require_shape(*bias, {c_out}, "conv2d bias");

  BasicTensor<T> out({c_out, g.out_h, g.out_w});
  ConstMapMat<T> k(kernel.ptr(), c_out, g.patch());
  MapMat<T> o(out.ptr(), c_out, g.positions());
  if (g.is_pointwise()) {
    o.noalias() = k * ConstMapMat<T>(input.ptr(), g.patch(), g.positions());
  } else {
    const AlignedVector<T> cols = im2col(input.ptr(), g);
    o.noalias() = k * ConstMapMat<T>(cols.data(), g.patch(), g.positions());
  }
  if (bias) {
    for (std::size_t c = 0; c < c_out; ++c) o.row(c).array() += (*bias)[c];
  }
  return out;
}

template <typename T>
Conv2dGrads<T> conv2d_backward(const BasicTensor<T>& input,
                               const BasicTensor<T>& kernel,
                               const BasicTensor<T>& grad_output,
                               std::size_t stride, bool need_input_grad) {
  const ConvGeometry g = conv_geometry(input, kernel, stride);
  const std::size_t c_out = kernel.dim(0);
  require_shape(grad_output, {c_out, g.out_h, g.out_w}, "conv2d grad_output");

  Conv2dGrads<T> grads;
  grads.kernel = BasicTensor<T>(kernel.shape());
  grads.bias = BasicTensor<T>({c_out});

  ConstMapMat<T> dout(grad_output.ptr(), c_out, g.positions());
  ConstMapMat<T> k(kernel.ptr(), c_out, g.patch());
  MapMat<T> dk(grads.kernel.ptr(), c_out, g.patch());
  for (std::size_t c = 0; c < c_out; ++c) grads.bias[c] = dout.row(c).sum();

  if (g.is_pointwise()) {
    ConstMapMat<T> x(input.ptr(), g.patch(), g.positions());
    dk.noalias() = dout * x.transpose();
    if (need_input_grad) {
      grads.input = BasicTensor<T>(input.shape());
      MapMat<T>(grads.input.ptr(), g.patch(), g.positions()).noalias() =
          k.transpose() * dout;
    }
    return grads;
  }

  const AlignedVector<T> cols = im2col(input.ptr(), g);
  dk.noalias() = dout * ConstMapMat<T>(cols.data(), g.patch(), g.positions()).transpose();
  if (need_input_grad) {
    RowMat<T> dcols = k.transpose() * dout;
    grads.input = BasicTensor<T>(input.shape());
    col2im(dcols.data(), g, grads.input.ptr());
  }
  return grads;
}

template <typename T>
std::vector<T> conv1d(std::span<const T> signal, std::span<const T> kernel) {
  if (kernel.size() % 2 == 0) {
    throw ShapeError("conv1d: kernel length must be odd, got " +
                     std::to_string(kernel.size()));
  }
  const long n = static_cast<long>(signal.size());
  const long s = static_cast<long>(kernel.size() / 2);
  std::vector<T> out(signal.size(), T{0});
  for (long i = 0; i < n; ++i) {
    T acc{0};
    for (long o = -s; o <= s; ++o) {
      const long j = i + o;
      if (j >= 0 && j < n) acc += kernel[o + s] * signal[j];
    }
    out[i] = acc;
  }
  return out;
}

template <typename T>
Conv1dGrads<T> conv1d_backward(std::span<const T> signal,
                               std::span<const T> kernel,
                               std::span<const T> grad_output) {
  if (kernel.size() % 2 == 0) {
    throw ShapeError("conv1d: kernel length must be odd, got " +
                     std::to_string(kernel.size()));
  }
  if (grad_output.size() != signal.size()) {
    throw ShapeError("conv1d: grad_output length differs from signal length");
  }
  const long n = static_cast<long>(signal.size());
  const long s = static_cast<long>(kernel.size() / 2);
  Conv1dGrads<T> g{std::vector<T>(signal.size(), T{0}),
                   std::vector<T>(kernel.size(), T{0})};
  for (long i = 0; i < n; ++i) {
    for (long o = -s; o <= s; ++o) {
      const long j = i + o;
      if (j < 0 || j >= n) continue;
      g.kernel[o + s] += grad_output[i] * signal[j];
      g.signal[j] += grad_output[i] * kernel[o + s];
    }
  }
  return g;
}

template <typename T>
BasicTensor<T> softmax_channels(const BasicTensor<T>& logits) {
  require_rank(logits, 3, "softmax_channels");
  if (logits.dim(0) != 2) {
    throw ShapeError("softmax_channels: expected 2 channels, got " +
                     shape_string(logits.shape()));
  }
  const std::size_t plane = logits.dim(1) * logits.dim(2);
  BasicTensor<T> out(logits.shape());
  for (std::size_t i = 0; i < plane; ++i) {
    const T a = logits[i], b = logits[plane + i];
    const T m = std::max(a, b);
    const T ea = std::exp(a - m), eb = std::exp(b - m);
    const T z = ea + eb;
    out[i] = ea / z;
    out[plane + i] = eb / z;
  }
  return out;
}

template <typename T>
BasicTensor<T> softmax_channels_backward(const BasicTensor<T>& probs,
                                         const BasicTensor<T>& grad_probs) {
  require_shape(grad_probs, probs.shape(), "softmax_channels_backward");
  const std::size_t plane = probs.dim(1) * probs.dim(2);
  BasicTensor<T> out(probs.shape());
  for (std::size_t i = 0; i < plane; ++i) {
    const T pa = probs[i], pb = probs[plane + i];
    const T ga = grad_probs[i], gb = grad_probs[plane + i];
    const T dot = pa * ga + pb * gb;
    out[i] = pa * (ga - dot);
    out[plane + i] = pb * (gb - dot);
  }
  return out;
}

template <typename T>
T sigmoid(T x) {
  if (x >= 0) return T{1} / (T{1} + std::exp(-x));
  const T e = std::exp(x);
  return e / (T{1} + e);
}

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x) {
  BasicTensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = sigmoid(x[i]);
  return out;
}

template <typename T>
BasicTensor<T> sigmoid_backward(const BasicTensor<T>& output,
                                const BasicTensor<T>& grad_output) {
  require_shape(grad_output, output.shape(), "sigmoid_backward");
  BasicTensor<T> out(output.shape());
  for (std::size_t i = 0; i < output.size(); ++i) {
    out[i] = grad_output[i] * output[i] * (T{1} - output[i]);
  }
  return out;
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  BasicTensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0 ? x[i] : T{0};
  return out;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& output,
                             const BasicTensor<T>& grad_output) {
  require_shape(grad_output, output.shape(), "relu_backward");
  BasicTensor<T> out(output.shape());
  for (std::size_t i = 0; i < output.size(); ++i) {
    out[i] = output[i] > 0 ? grad_output[i] : T{0};
  }
  return out;
}

template <typename T>
PixelLoss<T> pixel_cross_entropy(const BasicTensor<T>& fg_prob,
                                 const BasicTensor<T>& target,
                                 const BasicTensor<T>& weight) {
  require_shape(target, fg_prob.shape(), "pixel_cross_entropy target");
  require_shape(weight, fg_prob.shape(), "pixel_cross_entropy weight");
  PixelLoss<T> r;
  r.grad = BasicTensor<T>(fg_prob.shape());
  double wsum = 0.0;
  for (std::size_t i = 0; i < weight.size(); ++i) {
    if (weight[i] > 0) wsum += weight[i];
  }
  if (wsum <= 0.0) return r;
  r.supervised = true;

  const T lo = static_cast<T>(kProbEpsilon), hi = static_cast<T>(1.0 - kProbEpsilon);
  double acc = 0.0;
  for (std::size_t i = 0; i < fg_prob.size(); ++i) {
    const T w = weight[i];
    if (!(w > 0)) continue;
    const T p = clamp_prob(fg_prob[i]);
    const T t = target[i];
    acc += w * -(t * std::log(p) + (T{1} - t) * std::log(T{1} - p));
    const bool clamped = fg_prob[i] < lo || fg_prob[i] > hi;
    if (!clamped) {
      r.grad[i] = static_cast<T>(w * (-t / p + (T{1} - t) / (T{1} - p)) / wsum);
    }
  }
  r.loss = static_cast<T>(acc / wsum);
  return r;
}

template <typename T>
FocalLoss<T> focal_loss(const BasicTensor<T>& logits, std::span<const int> labels,
                        double alpha, double gamma) {
  require_rank(logits, 2, "focal_loss logits");
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  if (labels.size() != n) {
    throw ShapeError("focal_loss: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(n) + " anchors");
  }
  FocalLoss<T> r;
  r.grad = BasicTensor<T>(logits.shape());
  for (int l : labels) r.num_positive += l >= 0;
  const double norm = static_cast<double>(std::max<std::size_t>(1, r.num_positive));

  double acc = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    const int label = labels[a];
    if (label == kLabelIgnore) continue;
    for (std::size_t j = 0; j < c; ++j) {
      const double x = logits[a * c + j];
      const double p = sigmoid(x);
      double loss, dx;
      if (label == static_cast<int>(j)) {
        const double q = 1.0 - p;
        const double qg = std::pow(q, gamma);
        loss = -alpha * qg * log_sigmoid(x);
        dx = alpha * qg * (gamma * p * log_sigmoid(x) - q);
      } else {
        const double pg = std::pow(p, gamma);
        const double log_q = log_sigmoid(-x);
        loss = -(1.0 - alpha) * pg * log_q;
        dx = (1.0 - alpha) * pg * (p - gamma * (1.0 - p) * log_q);
      }
      acc += loss;
      r.grad[a * c + j] = static_cast<T>(dx / norm);
    }
  }
  r.loss = static_cast<T>(acc / norm);
  return r;
}

template <typename T>
SmoothL1<T> smooth_l1(std::span<const T> pred, std::span<const T> target) {
  if (pred.size() != target.size()) {
    throw ShapeError("smooth_l1: prediction and target lengths differ");
  }
  SmoothL1<T> r;
  r.grad.resize(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const T x = pred[i] - target[i];
    const T ax = std::abs(x);
    if (ax < T{1}) {
      r.value += T{0.5} * x * x;
      r.grad[i] = x;
    } else {
      r.value += ax - T{0.5};
      r.grad[i] = x > 0 ? T{1} : T{-1};
    }
  }
  return r;
}

namespace {

struct Tap {
  std::size_t lo, hi;
  double frac;  // weight of hi
};

// Sample-center mapping from output index to input coordinate.
std::vector<Tap> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto lo = static_cast<std::size_t>(std::floor(src));
    const std::size_t hi = std::min(lo + 1, in - 1);
    taps[i] = {lo, hi, src - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace

template <typename T>
BasicTensor<T> bilinear_upsample(const BasicTensor<T>& map, std::size_t out_h,
                                 std::size_t out_w) {
  require_rank(map, 3, "bilinear_upsample");
  const std::size_t ch = map.dim(0), h = map.dim(1), w = map.dim(2);
  if (out_h < h || out_w < w) {
    throw ShapeError("bilinear_upsample: target " + std::to_string(out_h) + "x" +
                     std::to_string(out_w) + " is smaller than source " +
                     shape_string(map.shape()));
  }
  const auto ty = bilinear_taps(h, out_h);
  const auto tx = bilinear_taps(w, out_w);
  BasicTensor<T> out({ch, out_h, out_w});
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t y = 0; y < out_h; ++y) {
      const T fy = static_cast<T>(ty[y].frac);
      for (std::size_t x = 0; x < out_w; ++x) {
        const T fx = static_cast<T>(tx[x].frac);
        const T top = map(c, ty[y].lo, tx[x].lo) * (T{1} - fx) + map(c, ty[y].lo, tx[x].hi) * fx;
        const T bot = map(c, ty[y].hi, tx[x].lo) * (T{1} - fx) + map(c, ty[y].hi, tx[x].hi) * fx;
        out(c, y, x) = top * (T{1} - fy) + bot * fy;
      }
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> bilinear_upsample_backward(const BasicTensor<T>& grad_output,
                                          std::size_t in_h, std::size_t in_w) {
  require_rank(grad_output, 3, "bilinear_upsample_backward");
  const std::size_t ch = grad_output.dim(0);
  const std::size_t out_h = grad_output.dim(1), out_w = grad_output.dim(2);
  const auto ty = bilinear_taps(in_h, out_h);
  const auto tx = bilinear_taps(in_w, out_w);
  BasicTensor<T> grad({ch, in_h, in_w});
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t y = 0; y < out_h; ++y) {
      const T fy = static_cast<T>(ty[y].frac);
      for (std::size_t x = 0; x < out_w; ++x) {
        const T fx = static_cast<T>(tx[x].frac);
        const T g = grad_output(c, y, x);
        grad(c, ty[y].lo, tx[x].lo) += g * (T{1} - fy) * (T{1} - fx);
        grad(c, ty[y].lo, tx[x].hi) += g * (T{1} - fy) * fx;
        grad(c, ty[y].hi, tx[x].lo) += g * fy * (T{1} - fx);
        grad(c, ty[y].hi, tx[x].hi) += g * fy * fx;
      }
    }
  }
  return grad;
}

#define RECIP_INSTANTIATE_OPS(T)                                                      \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&,         \
                                 const BasicTensor<T>*, std::size_t);                  \
  template Conv2dGrads<T> conv2d_backward(const BasicTensor<T>&, const BasicTensor<T>&, \
                                          const BasicTensor<T>&, std::size_t, bool);   \
  template std::vector<T> conv1d(std::span<const T>, std::span<const T>);             \
  template Conv1dGrads<T> conv1d_backward(std::span<const T>, std::span<const T>,     \
                                          std::span<const T>);                         \
  template BasicTensor<T> softmax_channels(const BasicTensor<T>&);                    \
  template BasicTensor<T> softmax_channels_backward(const BasicTensor<T>&,            \
                                                    const BasicTensor<T>&);           \
  template T sigmoid(T);                                                               \
  template BasicTensor<T> sigmoid(const BasicTensor<T>&);                             \
  template BasicTensor<T> sigmoid_backward(const BasicTensor<T>&, const BasicTensor<T>&); \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                \
  template BasicTensor<T> relu_backward(const BasicTensor<T>&, const BasicTensor<T>&); \
  template PixelLoss<T> pixel_cross_entropy(const BasicTensor<T>&, const BasicTensor<T>&, \
                                            const BasicTensor<T>&);                   \
  template FocalLoss<T> focal_loss(const BasicTensor<T>&, std::span<const int>, double, \
                                   double);                                            \
  template SmoothL1<T> smooth_l1(std::span<const T>, std::span<const T>);             \
  template BasicTensor<T> bilinear_upsample(const BasicTensor<T>&, std::size_t,       \
                                            std::size_t);                              \
  template BasicTensor<T> bilinear_upsample_backward(const BasicTensor<T>&, std::size_t, \
                                                     std::size_t);

RECIP_INSTANTIATE_OPS(float)
RECIP_INSTANTIATE_OPS(double)

#undef RECIP_INSTANTIATE_OPS

}  // namespace recip
