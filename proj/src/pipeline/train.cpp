#include "recip/pipeline/train.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "recip/core/error.hpp"
#include "recip/datagen/dataset.hpp"
#include "recip/numerics/ops.hpp"

namespace recip {
namespace {

void check_finite(double value, const char* term) {
  if (!std::isfinite(value)) {
    throw NumericError(std::string("non-finite ") + term + " loss (" + std::to_string(value) + ")");
  }
}

template <typename T>
void scale_in_place(BasicTensor<T>& t, T factor) {
  if (t.empty()) return;
  for (auto& v : t.raw()) v *= factor;
}

// Position of anchor `a` in an output map: (row, col, slot).
struct AnchorPos {
  std::size_t row, col, slot;
};

AnchorPos anchor_pos(const AnchorGrid& grid, std::size_t a) {
  const std::size_t cell = grid.cell_of(a);
  return {cell / grid.grid_w, cell % grid.grid_w, grid.slot_of(a)};
}

}  // namespace

void validate_train_config(const TrainConfig& cfg) {
  if (!(cfg.lambda_reg >= 0.0) || !(cfg.lambda_mask >= 0.0)) {
    throw std::invalid_argument("loss weights must be >= 0");
  }
  if (!(cfg.lr > 0.0)) throw std::invalid_argument("lr must be > 0");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) {
    throw std::invalid_argument("momentum must be in [0, 1)");
  }
  if (cfg.batch_size == 0) throw std::invalid_argument("batch size must be >= 1");
  if (!(cfg.grad_clip >= 0.0)) throw std::invalid_argument("grad_clip must be >= 0");
  if (!(cfg.mask.expand_ratio >= 1.0)) throw std::invalid_argument("expand ratio must be >= 1");
  if (cfg.match.negative > cfg.match.positive) {
    throw std::invalid_argument("negative IoU threshold exceeds the positive one");
  }
}

double learning_rate(const TrainConfig& cfg, std::size_t it) {
  double lr = cfg.lr;
  if (it < cfg.warmup_iterations) {
    lr *= 0.1 + 0.9 * static_cast<double>(it) / static_cast<double>(cfg.warmup_iterations);
  }
  for (double f : cfg.lr_decay_at) {
    if (static_cast<double>(it) >= f * static_cast<double>(cfg.iterations)) lr *= cfg.lr_decay;
  }
  return lr;
}

template <typename T>
ImageLoss<T> image_loss(const typename Network<T>::Forward& fwd, const AnchorGrid& grid,
                        const SceneSample& gt, const ModelConfig& model_cfg,
                        const TrainConfig& cfg) {
  const std::size_t c = static_cast<std::size_t>(model_cfg.num_classes);
  const std::size_t k = grid.k();
  const std::size_t gh = grid.grid_h, gw = grid.grid_w;
  const std::size_t d = model_cfg.repr_dim;
  require_shape(fwd.cls, {c * k, gh, gw}, "classification map");
  require_shape(fwd.reg, {4 * k, gh, gw}, "regression map");

  std::vector<Box> boxes;
  for (const auto& inst : gt.instances) boxes.push_back(inst.bbox);
  const auto matches = match_anchors(grid, boxes, static_cast<double>(gt.width),
                                     static_cast<double>(gt.height), cfg.match);
  const std::size_t n = grid.boxes.size();

  ImageLoss<T> out;
  auto& g = out.grads;

  // Classification over every anchor.
  BasicTensor<T> logits({n, c});
  std::vector<int> labels(n, kLabelNegative);
  std::vector<std::size_t> positives;
  for (std::size_t a = 0; a < n; ++a) {
    const AnchorPos p = anchor_pos(grid, a);
    for (std::size_t j = 0; j < c; ++j) logits[a * c + j] = fwd.cls(p.slot * c + j, p.row, p.col);
    switch (matches[a].label) {
      case AnchorLabel::kPositive:
        labels[a] = gt.instances[static_cast<std::size_t>(matches[a].gt_index)].class_id;
        positives.push_back(a);
        break;
      case AnchorLabel::kIgnore:
        labels[a] = kLabelIgnore;
        break;
      case AnchorLabel::kNegative:
        break;
    }
  }
  const FocalLoss<T> focal = focal_loss(logits, labels, cfg.focal_alpha, cfg.focal_gamma);
  out.terms.cls = static_cast<double>(focal.loss);
  out.terms.positives = positives.size();
  g.cls = BasicTensor<T>(fwd.cls.shape());
  for (std::size_t a = 0; a < n; ++a) {
    const AnchorPos p = anchor_pos(grid, a);
    for (std::size_t j = 0; j < c; ++j) g.cls(p.slot * c + j, p.row, p.col) = focal.grad[a * c + j];
  }
  check_finite(out.terms.cls, "classification");
  if (positives.empty()) {
    out.terms.total = out.terms.cls;
    return out;
  }

  // Box regression on positives.
  const T reg_scale = static_cast<T>(cfg.lambda_reg / static_cast<double>(positives.size()));
  g.reg = BasicTensor<T>(fwd.reg.shape());
  double reg_sum = 0.0;
  for (std::size_t a : positives) {
    const AnchorPos p = anchor_pos(grid, a);
    const Box& target_box = boxes[static_cast<std::size_t>(matches[a].gt_index)];
    const auto enc = encode_box(grid.boxes[a], target_box);
    T pred[4], target[4];
    for (std::size_t q = 0; q < 4; ++q) {
      pred[q] = fwd.reg(p.slot * 4 + q, p.row, p.col);
      target[q] = static_cast<T>(enc[q]);
    }
    const SmoothL1<T> l = smooth_l1<T>(pred, target);
    reg_sum += static_cast<double>(l.value);
    for (std::size_t q = 0; q < 4; ++q) g.reg(p.slot * 4 + q, p.row, p.col) = l.grad[q] * reg_scale;
  }
  out.terms.reg = reg_sum / static_cast<double>(positives.size());
  check_finite(out.terms.reg, "regression");

  // Masks: each positive anchor's representation is correlated with psi.
  std::vector<BinaryMask> small;
  small.reserve(gt.instances.size());
  for (const auto& inst : gt.instances) small.push_back(downsample_mask(inst.mask, cfg.mask.stride));
  std::vector<BasicTensor<T>> phis, sims;
  phis.reserve(positives.size());
  sims.reserve(positives.size());
  std::vector<MaskLossInput<T>> inputs;
  for (std::size_t a : positives) {
    const AnchorPos p = anchor_pos(grid, a);
    phis.push_back(extract_object_repr(fwd.repr, p.row, p.col, p.slot, d));
    sims.push_back(correlate(fwd.psi, phis.back()));
  }
  for (std::size_t i = 0; i < positives.size(); ++i) {
    const auto gi = static_cast<std::size_t>(matches[positives[i]].gt_index);
    inputs.push_back({&sims[i], &small[gi], boxes[gi]});
  }
  const MaskLossResult<T> ml = mask_training_loss(inputs, cfg.mask);
  out.terms.mask = static_cast<double>(ml.loss);
  out.terms.mask_objects = ml.used;
  out.terms.mask_skipped = ml.skipped;
  out.mask_weights = ml.weights;
  check_finite(out.terms.mask, "mask");

  g.psi = BasicTensor<T>(fwd.psi.shape());
  g.repr = BasicTensor<T>(fwd.repr.shape());
  const T mask_scale = static_cast<T>(cfg.lambda_mask);
  for (std::size_t i = 0; i < positives.size(); ++i) {
    if (ml.stats[i].skipped) continue;
    BasicTensor<T> gp = ml.grads[i];
    scale_in_place(gp, mask_scale);
    const CorrelateGrads<T> cg = correlate_backward(fwd.psi, phis[i], sims[i], gp);
    for (std::size_t j = 0; j < cg.psi.size(); ++j) g.psi[j] += cg.psi[j];
    const AnchorPos p = anchor_pos(grid, positives[i]);
    scatter_object_repr_grad(g.repr, p.row, p.col, p.slot, cg.phi);
  }

  out.terms.total = out.terms.cls + cfg.lambda_reg * out.terms.reg + cfg.lambda_mask * out.terms.mask;
  return out;
}

LossBreakdown train_step(const std::vector<const SceneSample*>& batch, Detector& model,
                         const TrainConfig& cfg, double lr) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  model.params.zero_grad();
  LossBreakdown sum;
  const float inv = 1.0f / static_cast<float>(batch.size());
  for (const SceneSample* s : batch) {
    const Tensor image = image_to_tensor<float>(s->image, s->height, s->width);
    const auto fwd = model.network.forward(model.params, image);
    const AnchorGrid grid = generate_anchors(model.config.anchors, s->height, s->width);
    ImageLoss<float> il = image_loss<float>(fwd, grid, *s, model.config, cfg);
    scale_in_place(il.grads.cls, inv);
    scale_in_place(il.grads.reg, inv);
    scale_in_place(il.grads.psi, inv);
    scale_in_place(il.grads.repr, inv);
    model.network.backward(model.params, fwd, il.grads);
    sum.cls += il.terms.cls;
    sum.reg += il.terms.reg;
    sum.mask += il.terms.mask;
    sum.total += il.terms.total;
    sum.positives += il.terms.positives;
    sum.mask_objects += il.terms.mask_objects;
    sum.mask_skipped += il.terms.mask_skipped;
  }
  const double b = static_cast<double>(batch.size());
  sum.cls /= b;
  sum.reg /= b;
  sum.mask /= b;
  sum.total /= b;

  sum.grad_norm = model.params.grad_norm();
  if (!std::isfinite(sum.grad_norm)) throw NumericError("non-finite gradient norm");
  if (cfg.grad_clip > 0.0 && sum.grad_norm > cfg.grad_clip) {
    model.params.scale_grad(static_cast<float>(cfg.grad_clip / sum.grad_norm));
  }
  sgd_step(model.params, lr, cfg.momentum);
  return sum;
}

BatchPlan plan_batch(const TrainConfig& cfg, std::size_t it, std::size_t dataset_size) {
  if (dataset_size == 0) throw std::invalid_argument("training set is empty");
  std::mt19937_64 rng(scene_seed(cfg.seed ^ 0x7452a1c3e5d9b08fULL, it));
  BatchPlan plan;
  for (std::size_t b = 0; b < cfg.batch_size; ++b) {
    plan.indices.push_back(static_cast<std::size_t>(rng() % dataset_size));
    plan.flipped.push_back(cfg.flip && (rng() >> 63) != 0);
  }
  return plan;
}

void train_range(Detector& model, const std::vector<SceneSample>& data, const TrainConfig& cfg,
                 std::size_t first, std::size_t last, const TrainCallback& on_step) {
  validate_train_config(cfg);
  for (std::size_t it = first; it < last; ++it) {
    const BatchPlan plan = plan_batch(cfg, it, data.size());
    std::vector<SceneSample> flipped;
    flipped.reserve(plan.indices.size());
    std::vector<const SceneSample*> batch;
    for (std::size_t b = 0; b < plan.indices.size(); ++b) {
      const SceneSample& s = data[plan.indices[b]];
      if (plan.flipped[b]) {
        flipped.push_back(flip_horizontal(s));
        batch.push_back(&flipped.back());
      } else {
        batch.push_back(&s);
      }
    }
    const LossBreakdown l = train_step(batch, model, cfg, learning_rate(cfg, it));
    if (on_step) on_step(it + 1, l);
  }
}

template ImageLoss<float> image_loss<float>(const Network<float>::Forward&, const AnchorGrid&,
                                            const SceneSample&, const ModelConfig&,
                                            const TrainConfig&);
template ImageLoss<double> image_loss<double>(const Network<double>::Forward&, const AnchorGrid&,
                                              const SceneSample&, const ModelConfig&,
                                              const TrainConfig&);

}  // namespace recip
