#include "recip/cli/run_config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace recip {
namespace {

struct KeyDefault {
  const char* key;
  const char* value;
};

// Order is the order of the metadata echo.
constexpr KeyDefault kDefaults[] = {
    {"data_dir", "data"},
    {"out_dir", "run"},
    {"image_size", "128"},
    {"num_classes", "3"},
    {"min_instances", "1"},
    {"max_instances", "4"},
    {"anchor_stride", "8"},
    {"anchor_scales", "32,48,64"},
    {"anchor_ratios", "0.5,1,2"},
    {"repr_dim", "32"},
    {"pixel_stride", "4"},
    {"stem_channels", "32"},
    {"backbone_channels", "64"},
    {"pixel_hidden", "256"},
    {"head_hidden", "256"},
    {"lambda_reg", "1"},
    {"lambda_mask", "1"},
    {"focal_alpha", "0.25"},
    {"focal_gamma", "2"},
    {"train_expand_ratio", "1.5"},
    {"infer_expand_ratio", "1.2"},
    {"ohem", "true"},
    {"ohem_bg_per_fg", "1"},
    {"lr", "0.02"},
    {"momentum", "0.9"},
    {"warmup_iterations", "100"},
    {"lr_decay_at", "0.75,0.9"},
    {"lr_decay", "0.1"},
    {"grad_clip", "10"},
    {"iterations", "2000"},
    {"batch_size", "4"},
    {"flip", "true"},
    {"seed", "0"},
    {"checkpoint_every", "500"},
    {"mbrm_scope", "4"},
    {"mbrm_gamma", "0.05"},
    {"mbrm_iterations", "1000"},
    {"mbrm_batch_size", "16"},
    {"mbrm_lr", "0.5"},
    {"mbrm_momentum", "0.9"},
    {"score_threshold", "0.3"},
    {"nms_iou", "0.5"},
    {"mask_threshold", "0.4"},
    {"max_detections", "100"},
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("config key '" + key + "': cannot parse '" + text + "'");
  }
  return v;
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& d : kDefaults) values_[d.key] = d.value;
}

std::vector<std::string> RunConfig::known_keys() {
  std::vector<std::string> keys;
  for (const auto& d : kDefaults) keys.emplace_back(d.key);
  return keys;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second = value;
}

void RunConfig::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("expected key=value, got '" + assignment + "'");
  }
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    try {
      set_assignment(line);
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

double RunConfig::get_double(const std::string& key) const {
  return parse_number<double>(key, get(key));
}

std::int64_t RunConfig::get_int(const std::string& key) const {
  return parse_number<std::int64_t>(key, get(key));
}

std::size_t RunConfig::get_size(const std::string& key) const {
  const std::int64_t v = get_int(key);
  if (v < 0) throw ConfigError("config key '" + key + "' must be >= 0");
  return static_cast<std::size_t>(v);
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  return parse_number<std::uint64_t>(key, get(key));
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

std::vector<double> RunConfig::get_list(const std::string& key) const {
  std::vector<double> out;
  std::stringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_number<double>(key, item));
  }
  return out;
}

ModelConfig RunConfig::model() const {
  ModelConfig m;
  m.num_classes = static_cast<int>(get_int("num_classes"));
  m.repr_dim = get_size("repr_dim");
  m.stem_channels = get_size("stem_channels");
  m.backbone_channels = get_size("backbone_channels");
  m.pixel_hidden = get_size("pixel_hidden");
  m.head_hidden = get_size("head_hidden");
  m.anchors.stride = get_size("anchor_stride");
  m.anchors.scales = get_list("anchor_scales");
  m.anchors.ratios = get_list("anchor_ratios");
  return m;
}

TrainConfig RunConfig::train() const {
  TrainConfig t;
  t.lambda_reg = get_double("lambda_reg");
  t.lambda_mask = get_double("lambda_mask");
  t.focal_alpha = get_double("focal_alpha");
  t.focal_gamma = get_double("focal_gamma");
  t.lr = get_double("lr");
  t.momentum = get_double("momentum");
  t.warmup_iterations = get_size("warmup_iterations");
  t.lr_decay_at = get_list("lr_decay_at");
  t.lr_decay = get_double("lr_decay");
  t.grad_clip = get_double("grad_clip");
  t.iterations = get_size("iterations");
  t.batch_size = get_size("batch_size");
  t.seed = get_u64("seed");
  t.flip = get_bool("flip");
  t.mask.stride = get_size("pixel_stride");
  t.mask.expand_ratio = get_double("train_expand_ratio");
  t.mask.ohem = get_bool("ohem");
  t.mask.bg_per_fg = get_double("ohem_bg_per_fg");
  return t;
}

InferConfig RunConfig::infer() const {
  InferConfig c;
  c.score_threshold = get_double("score_threshold");
  c.nms_iou = get_double("nms_iou");
  c.mask_threshold = get_double("mask_threshold");
  c.expand_ratio = get_double("infer_expand_ratio");
  c.max_detections = get_size("max_detections");
  return c;
}

MbrmTrainConfig RunConfig::mbrm_train() const {
  MbrmTrainConfig c;
  c.iterations = get_size("mbrm_iterations");
  c.batch_size = get_size("mbrm_batch_size");
  c.lr = get_double("mbrm_lr");
  c.momentum = get_double("mbrm_momentum");
  c.seed = get_u64("seed");
  return c;
}

SceneConfig RunConfig::scene() const {
  SceneConfig s;
  s.image_size = get_size("image_size");
  s.num_classes = static_cast<int>(get_int("num_classes"));
  s.min_instances = get_size("min_instances");
  s.max_instances = get_size("max_instances");
  return s;
}

void RunConfig::validate() const {
  auto wrap = [](const char* what, auto&& fn) {
    try {
      fn();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(std::string(what) + ": " + e.what());
    }
  };
  wrap("model", [&] { validate_model_config(model()); });
  wrap("training", [&] { validate_train_config(train()); });
  wrap("scene", [&] { validate_scene_config(scene()); });
  wrap("mbrm", [&] { (void)MbrmParams::zeros(mbrm_scope(), mbrm_gamma()); });
  if (get_size("pixel_stride") != ModelConfig::kPixelStride) {
    throw ConfigError("config key 'pixel_stride': the network's pixel stream runs at stride " +
                      std::to_string(ModelConfig::kPixelStride));
  }
  if (get_size("anchor_stride") != ModelConfig::kObjectStride) {
    throw ConfigError("config key 'anchor_stride': the object stream runs at stride " +
                      std::to_string(ModelConfig::kObjectStride));
  }
  if (get_size("image_size") % ModelConfig::kObjectStride != 0) {
    throw ConfigError("config key 'image_size' must be a multiple of 8");
  }
  const InferConfig ic = infer();
  if (!(ic.expand_ratio >= 1.0)) throw ConfigError("config key 'infer_expand_ratio' must be >= 1");
  for (const char* k : {"score_threshold", "nms_iou", "mask_threshold"}) {
    const double v = get_double(k);
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(std::string("config key '") + k + "' must be in [0, 1]");
  }
  (void)get_size("checkpoint_every");
  (void)mbrm_train();
}

}  // namespace recip
