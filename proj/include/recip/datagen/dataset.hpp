#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "recip/datagen/scene.hpp"

namespace recip {

inline constexpr int kDatasetFormatVersion = 1;
inline constexpr const char* kManifestName = "annotations.json";

/// Generation provenance echoed into the manifest.
struct DatasetInfo {
  std::uint64_t seed = 0;
  SceneConfig config;
};

struct Dataset {
  std::vector<SceneSample> samples;
  std::optional<DatasetInfo> info;
};

/// Writes images/NNNNNN.png and then annotations.json. The manifest is
/// written last through a rename, so its presence marks a complete dataset.
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);

/// Throws DataError naming the offending file on missing or corrupt input.
Dataset load_dataset(const std::filesystem::path& dir);

/// Deterministic dataset of `count` scenes; scene i uses seed (seed, i).
Dataset generate_dataset(std::uint64_t seed, std::size_t count, const SceneConfig& cfg = {});

/// Per-scene seed derivation shared by every generator entry point.
std::uint64_t scene_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace recip
