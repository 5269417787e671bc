#pragma once

// Mask-based boundary refinement. Each box side is a discrete random variable
// over image coordinates; its posterior combines a Gaussian prior centred on
// the regressed side with a likelihood computed from the mask's per-line
// maximum profile by a learned 1-D convolution followed by a sigmoid.
//
// Side coordinates are inclusive pixel indices: for a box (x, y, w, h) the
// left side is x and the right side is x + w - 1 (likewise top/bottom).

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "recip/core/box.hpp"
#include "recip/numerics/tensor.hpp"

namespace recip {

inline constexpr std::size_t kDefaultInfluenceScope = 4;  // s
inline constexpr double kDefaultPriorGamma = 0.05;        // sigma = gamma * box extent
inline constexpr double kMinPriorSigma = 0.1;             // below: one-hot prior

/// One kernel of length 2s + 1 and a bias, shared by all four sides; right
/// and bottom sides see the reversed profile.
struct MbrmParams {
  std::vector<double> kernel;
  double bias = 0.0;
  double gamma = kDefaultPriorGamma;

  std::size_t scope() const { return kernel.size() / 2; }

  /// All-zero kernel and bias: likelihood is 0.5 everywhere.
  static MbrmParams zeros(std::size_t scope = kDefaultInfluenceScope,
                          double gamma = kDefaultPriorGamma);
};

enum class Axis { kHorizontal, kVertical };
enum class Side { kLeft, kRight, kTop, kBottom };

/// mask: h x w (or 1 x h x w). Horizontal: per-column max over rows (length
/// w). Vertical: per-row max over columns (length h).
std::vector<double> boundary_profile(const Tensor& mask, Axis axis);

/// sigmoid(conv1d(profile, kernel) + bias); right/bottom sides run on the
/// reversed profile and reverse the result back.
std::vector<double> boundary_likelihood(std::span<const double> profile,
                                        const MbrmParams& params, Side side);

/// Discrete Gaussian over 0..n-1 with mean `center` and sigma gamma * extent,
/// renormalized to sum 1; one-hot at round(center) when sigma < kMinPriorSigma.
std::vector<double> boundary_prior(double center, double extent, double gamma, std::size_t n);

struct BoundaryDistribution {
  std::vector<double> posterior;
  std::size_t argmax = 0;
  bool degenerate = false;  // prior * likelihood vanished; argmax is the prior's
};

/// posterior[i] = prior[i] likelihood[i] / sum_t prior[t] likelihood[t];
/// argmax takes the lowest index on ties.
BoundaryDistribution boundary_posterior(std::span<const double> prior,
                                        std::span<const double> likelihood);

struct RefineResult {
  Box box;
  bool no_evidence = false;                // mask was all zero
  std::array<bool, 2> axis_fallback{};     // horizontal, vertical kept the regressed sides
  std::array<std::size_t, 4> sides{};      // left, right, top, bottom
};

/// Refines a regressed box against a full-resolution soft mask. gamma == 0
/// returns the input box unchanged.
RefineResult refine_box(const Box& regressed, const Tensor& mask, const MbrmParams& params);

/// Inclusive side coordinates (left, right, top, bottom) of a box.
std::array<double, 4> box_sides(const Box& b);

/// One training example: full-resolution soft mask with its gt and regressed box.
struct MbrmSample {
  Tensor mask;  // h x w
  Box gt;
  Box regressed;
};

struct MbrmLoss {
  double loss = 0.0;           // mean cross-entropy over contributing sides
  std::size_t sides = 0;       // sides with a usable (non one-hot) prior
  std::vector<double> grad_kernel;
  double grad_bias = 0.0;
};

/// Cross-entropy between each side's posterior and its one-hot gt coordinate,
/// averaged over the four sides, with analytic gradients for kernel and bias.
MbrmLoss mbrm_loss(const MbrmSample& sample, const MbrmParams& params);

struct MbrmTrainConfig {
  std::size_t iterations = 1000;
  std::size_t batch_size = 16;
  double lr = 0.5;
  double momentum = 0.9;
  std::uint64_t seed = 0;
};

struct MbrmTrainReport {
  MbrmParams params;
  std::vector<double> loss_history;  // mean batch loss per iteration
};

/// Momentum-SGD on kernel and bias only. Throws std::invalid_argument on an
/// empty sample set.
MbrmTrainReport train_mbrm(const std::vector<MbrmSample>& samples, MbrmParams init,
                           const MbrmTrainConfig& cfg = {});

}  // namespace recip
