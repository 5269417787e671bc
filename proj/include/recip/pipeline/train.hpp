#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "recip/corr_crop/corr_crop.hpp"
#include "recip/datagen/scene.hpp"
#include "recip/model/anchors.hpp"
#include "recip/model/network.hpp"
#include "recip/pipeline/detector.hpp"

namespace recip {

struct TrainConfig {
  double lambda_reg = 1.0;
  double lambda_mask = 1.0;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;

  double lr = 0.01;
  double momentum = 0.9;
  std::size_t warmup_iterations = 100;  // linear ramp from lr / 10
  std::vector<double> lr_decay_at = {0.75, 0.9};  // fractions of `iterations`
  double lr_decay = 0.1;
  double grad_clip = 10.0;  // global L2 norm; 0 disables

  std::size_t iterations = 2000;
  std::size_t batch_size = 4;
  std::uint64_t seed = 0;
  bool flip = true;

  MatchThresholds match;
  MaskLossConfig mask;
};

/// Throws std::invalid_argument on negative weights, zero batch size and the like.
void validate_train_config(const TrainConfig& cfg);

/// Learning rate at iteration `it` (0-based).
double learning_rate(const TrainConfig& cfg, std::size_t it);

struct LossBreakdown {
  double cls = 0.0;
  double reg = 0.0;
  double mask = 0.0;
  double total = 0.0;
  std::size_t positives = 0;
  std::size_t mask_objects = 0;
  std::size_t mask_skipped = 0;
  double grad_norm = 0.0;
};

/// Per-image loss terms and the gradients of the weighted total with respect
/// to the network outputs.
template <typename T>
struct ImageLoss {
  LossBreakdown terms;
  typename Network<T>::OutputGrads grads;
  std::vector<BasicTensor<T>> mask_weights;  // supervised pixels per positive anchor
};

/// L = focal + lambda_r smooth_l1 (positives) + lambda_m mask loss for one
/// image. Only positive anchors' representations enter the correlation.
/// Throws NumericError naming the first non-finite term.
template <typename T>
ImageLoss<T> image_loss(const typename Network<T>::Forward& fwd, const AnchorGrid& grid,
                        const SceneSample& gt, const ModelConfig& model_cfg,
                        const TrainConfig& cfg);

/// Forward, loss, backward over `batch`, then one clipped momentum-SGD step
/// at learning rate `lr`. Returns batch-mean terms.
LossBreakdown train_step(const std::vector<const SceneSample*>& batch, Detector& model,
                         const TrainConfig& cfg, double lr);

/// Images and flip decisions for iteration `it`, drawn from a generator
/// seeded by (seed, it) so any iteration can be replayed in isolation.
struct BatchPlan {
  std::vector<std::size_t> indices;
  std::vector<bool> flipped;
};
BatchPlan plan_batch(const TrainConfig& cfg, std::size_t it, std::size_t dataset_size);

using TrainCallback = std::function<void(std::size_t iteration, const LossBreakdown&)>;

/// Runs iterations [first, last) of the schedule. The callback fires after
/// each step with the 1-based count of completed iterations.
void train_range(Detector& model, const std::vector<SceneSample>& data, const TrainConfig& cfg,
                 std::size_t first, std::size_t last, const TrainCallback& on_step = {});

}  // namespace recip
