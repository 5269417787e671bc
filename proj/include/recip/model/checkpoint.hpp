#pragma once

// Binary checkpoint, little-endian:
//   magic "RDSN" | version u32 | record count u32 |
//   per record: name length u32 | UTF-8 name | rank u32 | dims u32[rank] |
//               f32 payload, row-major.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "recip/numerics/param_store.hpp"
#include "recip/numerics/tensor.hpp"

namespace recip {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointRecord {
  std::string name;
  Tensor value;
};

struct Checkpoint {
  std::vector<CheckpointRecord> records;

  bool contains(const std::string& name) const;
  const Tensor& get(const std::string& name) const;
  /// Inserts or replaces.
  void set(const std::string& name, Tensor value);
};

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

/// Throws DataError on bad magic, unknown version, or truncation.
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Prefix used for momentum buffers ("opt.momentum.<param>").
inline constexpr const char* kMomentumPrefix = "opt.momentum.";

/// Copies every parameter value (and optionally its momentum buffer).
void store_to_checkpoint(const ParamStore& store, Checkpoint& ckpt, bool with_momentum);

/// Loads values (and momentum buffers when present) for every parameter of
/// `store`. A missing record or a shape disagreement throws ShapeError listing
/// each offending parameter with expected and stored shapes.
void checkpoint_to_store(const Checkpoint& ckpt, ParamStore& store, bool with_momentum);

}  // namespace recip
