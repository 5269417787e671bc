#include "recip/pipeline/detector.hpp"

#include <cmath>

#include "recip/core/error.hpp"

namespace recip {

Detector::Detector(const ModelConfig& cfg, std::uint64_t init_seed, std::size_t mbrm_scope,
                   double gamma)
    : config(cfg), network(cfg), mbrm(MbrmParams::zeros(mbrm_scope, gamma)) {
  network.init_params(params, init_seed);
}

Checkpoint Detector::to_checkpoint(bool with_train_state, std::size_t iteration) const {
  Checkpoint ckpt;
  store_to_checkpoint(params, ckpt, with_train_state);
  std::vector<float> kernel(mbrm.kernel.begin(), mbrm.kernel.end());
  const std::size_t n = kernel.size();
  ckpt.set(kMbrmKernelRecord, Tensor({n}, std::move(kernel)));
  ckpt.set(kMbrmBiasRecord, Tensor({1}, static_cast<float>(mbrm.bias)));
  if (with_train_state) {
    ckpt.set(kIterationRecord, Tensor({1}, static_cast<float>(iteration)));
  }
  return ckpt;
}

std::size_t Detector::load_checkpoint(const Checkpoint& ckpt, bool with_train_state) {
  checkpoint_to_store(ckpt, params, with_train_state);
  if (ckpt.contains(kMbrmKernelRecord)) {
    const Tensor& k = ckpt.get(kMbrmKernelRecord);
    if (k.rank() != 1 || k.size() != mbrm.kernel.size()) {
      throw ShapeError(std::string("checkpoint does not match the configured model:\n  ") +
                       kMbrmKernelRecord + ": expected [" + std::to_string(mbrm.kernel.size()) +
                       "], checkpoint has " + shape_string(k.shape()));
    }
    mbrm.kernel.assign(k.values().begin(), k.values().end());
    mbrm.bias = ckpt.get(kMbrmBiasRecord)[0];
  }
  if (with_train_state && ckpt.contains(kIterationRecord)) {
    return static_cast<std::size_t>(std::lround(ckpt.get(kIterationRecord)[0]));
  }
  return 0;
}

}  // namespace recip
