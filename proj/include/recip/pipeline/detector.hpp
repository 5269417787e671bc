#pragma once

#include <cstddef>
#include <cstdint>

#include "recip/mbrm/mbrm.hpp"
#include "recip/model/checkpoint.hpp"
#include "recip/model/network.hpp"

namespace recip {

inline constexpr const char* kMbrmKernelRecord = "mbrm.kernel";
inline constexpr const char* kMbrmBiasRecord = "mbrm.bias";
inline constexpr const char* kIterationRecord = "train.iteration";

/// Network parameters plus the boundary refinement parameters: everything a
/// checkpoint holds.
struct Detector {
  ModelConfig config;
  Network<float> network;
  ParamStore params;
  MbrmParams mbrm;

  Detector(const ModelConfig& cfg, std::uint64_t init_seed,
           std::size_t mbrm_scope = kDefaultInfluenceScope, double gamma = kDefaultPriorGamma);

  /// Network values, MBRM records and, optionally, momentum buffers and the
  /// iteration counter.
  Checkpoint to_checkpoint(bool with_train_state, std::size_t iteration = 0) const;

  /// Returns the stored iteration counter (0 when absent). MBRM records are
  /// optional; when absent the module keeps its zero initialization.
  std::size_t load_checkpoint(const Checkpoint& ckpt, bool with_train_state);
};

}  // namespace recip
