#pragma once

// Flat key=value run configuration. Every key has a default; files and
// command-line overrides may only set known keys.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "recip/mbrm/mbrm.hpp"
#include "recip/model/network.hpp"
#include "recip/pipeline/infer.hpp"
#include "recip/pipeline/train.hpp"

namespace recip {

class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

class RunConfig {
 public:
  RunConfig();  // all defaults

  /// Throws ConfigError for unknown keys.
  void set(const std::string& key, const std::string& value);
  /// "key=value" form used by --set.
  void set_assignment(const std::string& assignment);
  /// Lines of key=value; '#' starts a comment; blank lines are skipped.
  void load_file(const std::filesystem::path& path);

  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<double> get_list(const std::string& key) const;

  const std::map<std::string, std::string>& values() const { return values_; }
  static std::vector<std::string> known_keys();

  ModelConfig model() const;
  TrainConfig train() const;
  InferConfig infer() const;
  MbrmTrainConfig mbrm_train() const;
  SceneConfig scene() const;
  std::size_t mbrm_scope() const { return get_size("mbrm_scope"); }
  double mbrm_gamma() const { return get_double("mbrm_gamma"); }

  /// Parses and range-checks every key; throws ConfigError naming the key.
  void validate() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace recip
