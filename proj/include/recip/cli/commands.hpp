#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "recip/cli/run_config.hpp"

namespace recip {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kRunMetaName = "run_meta.json";
inline constexpr const char* kFinalCheckpoint = "model.ckpt";
inline constexpr const char* kMbrmCheckpoint = "model_mbrm.ckpt";
inline constexpr const char* kLossLog = "loss.csv";

/// Writes {command, tool_version, formats, config} into `dir`/run_meta.json.
void write_run_meta(const std::filesystem::path& dir, const std::string& command,
                    const RunConfig& cfg);

struct GenDataOptions {
  std::uint64_t seed = 0;
  std::size_t count = 0;
  std::filesystem::path out;
  bool force = false;
};
void cmd_gen_data(const GenDataOptions& opt, const RunConfig& cfg);

struct TrainOptions {
  std::optional<std::filesystem::path> resume;  // checkpoint with training state
  bool quiet = false;
};
/// Phase one. Writes ckpt_<iteration>.ckpt every checkpoint_every iterations
/// and model.ckpt at the end into out_dir; appends to loss.csv.
void cmd_train(const TrainOptions& opt, const RunConfig& cfg);

struct TrainMbrmOptions {
  std::filesystem::path checkpoint;  // phase-one result
  std::optional<std::filesystem::path> out;  // default: out_dir/model_mbrm.ckpt
  bool quiet = false;
};
/// Phase two: only the MBRM kernel and bias change.
void cmd_train_mbrm(const TrainMbrmOptions& opt, const RunConfig& cfg);

struct InferOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path out;  // results JSON
};
void cmd_infer(const InferOptions& opt, const RunConfig& cfg);

struct EvalOptions {
  std::filesystem::path results;
  std::string boxes = "refined";
  std::optional<std::filesystem::path> out;  // report JSON
};
/// Prints the text table to stdout.
void cmd_eval(const EvalOptions& opt, const RunConfig& cfg);

struct VizOptions {
  std::optional<std::filesystem::path> checkpoint;
  std::optional<std::filesystem::path> results;
  std::filesystem::path out;
  std::size_t limit = 16;
};
void cmd_viz(const VizOptions& opt, const RunConfig& cfg);

/// One-line JSON error record for standard error.
std::string error_json(const std::string& command, const std::exception& e);

}  // namespace recip
