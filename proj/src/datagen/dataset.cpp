#include "recip/datagen/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <map>

#include "json.hpp"
#include "recip/core/error.hpp"
#include "recip/datagen/png_io.hpp"
#include "recip/datagen/rle.hpp"

namespace recip {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string image_file_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "images/%06zu.png", index);
  return buf;
}

json config_to_json(const SceneConfig& c) {
  return {{"image_size", c.image_size},
          {"min_instances", c.min_instances},
          {"max_instances", c.max_instances},
          {"num_classes", c.num_classes},
          {"min_size_fraction", c.min_size_fraction},
          {"max_size_fraction", c.max_size_fraction},
          {"noise_amplitude", c.noise_amplitude},
          {"min_visible_fraction", c.min_visible_fraction},
          {"max_attempts", c.max_attempts}};
}

SceneConfig config_from_json(const json& j) {
  SceneConfig c;
  c.image_size = j.at("image_size").get<std::size_t>();
  c.min_instances = j.at("min_instances").get<std::size_t>();
  c.max_instances = j.at("max_instances").get<std::size_t>();
  c.num_classes = j.at("num_classes").get<int>();
  c.min_size_fraction = j.at("min_size_fraction").get<double>();
  c.max_size_fraction = j.at("max_size_fraction").get<double>();
  c.noise_amplitude = j.at("noise_amplitude").get<int>();
  c.min_visible_fraction = j.value("min_visible_fraction", c.min_visible_fraction);
  c.max_attempts = j.value("max_attempts", c.max_attempts);
  return c;
}

}  // namespace

std::uint64_t scene_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 finalizer over the pair.
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ULL + index + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Dataset generate_dataset(std::uint64_t seed, std::size_t count, const SceneConfig& cfg) {
  Dataset ds;
  ds.info = DatasetInfo{seed, cfg};
  ds.samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    ds.samples.push_back(generate_scene(scene_seed(seed, i), cfg));
  }
  return ds;
}

void write_dataset(const Dataset& dataset, const fs::path& dir) {
  fs::create_directories(dir / "images");
  json images = json::array();
  json annotations = json::array();
  std::size_t ann_id = 0;
  int max_class = 2;
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const SceneSample& s = dataset.samples[i];
    const std::string file = image_file_name(i);
    write_png((dir / file).string(), quantize_image(s.image, s.height, s.width));
    images.push_back({{"id", i}, {"file_name", file}, {"width", s.width}, {"height", s.height}});
    for (const Instance& inst : s.instances) {
      const Rle rle = rle_encode(inst.mask);
      max_class = std::max(max_class, inst.class_id);
      annotations.push_back({{"id", ann_id++},
                             {"image_id", i},
                             {"category_id", inst.class_id},
                             {"bbox", {inst.bbox.x, inst.bbox.y, inst.bbox.w, inst.bbox.h}},
                             {"area", inst.mask.count()},
                             {"iscrowd", 0},
                             {"segmentation",
                              {{"size", {rle.height, rle.width}}, {"counts", rle.counts}}}});
    }
  }
  json categories = json::array();
  const int num_classes = dataset.info ? dataset.info->config.num_classes : max_class + 1;
  for (int c = 0; c < num_classes; ++c) {
    categories.push_back({{"id", c}, {"name", shape_class_name(c)}});
  }
  json info = {{"format_version", kDatasetFormatVersion}};
  if (dataset.info) {
    info["seed"] = dataset.info->seed;
    info["config"] = config_to_json(dataset.info->config);
  }
  const json manifest = {{"info", info},
                         {"images", images},
                         {"annotations", annotations},
                         {"categories", categories}};

  const fs::path tmp = dir / (std::string(kManifestName) + ".tmp");
  {
    std::ofstream out(tmp);
    if (!out) throw DataError("cannot write '" + tmp.string() + "'");
    out << manifest.dump(1) << '\n';
    if (!out) throw DataError("cannot write '" + tmp.string() + "'");
  }
  fs::rename(tmp, dir / kManifestName);
}

Dataset load_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / kManifestName;
  if (!fs::exists(manifest_path)) {
    throw DataError("incomplete dataset: '" + manifest_path.string() + "' is missing");
  }
  json manifest;
  try {
    std::ifstream in(manifest_path);
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("corrupt manifest '" + manifest_path.string() + "': " + e.what());
  }

  Dataset ds;
  try {
    const json& info = manifest.at("info");
    const int version = info.value("format_version", 0);
    if (version != kDatasetFormatVersion) {
      throw DataError("unsupported dataset format version " + std::to_string(version) +
                      " in '" + manifest_path.string() + "'");
    }
    if (info.contains("config")) {
      ds.info = DatasetInfo{info.at("seed").get<std::uint64_t>(),
                            config_from_json(info.at("config"))};
    }

    std::map<std::uint64_t, std::size_t> by_id;
    for (const json& img : manifest.at("images")) {
      const auto id = img.at("id").get<std::uint64_t>();
      const fs::path file = dir / img.at("file_name").get<std::string>();
      if (!fs::exists(file)) throw DataError("missing image file '" + file.string() + "'");
      const RgbImage rgb = read_png(file.string());
      const auto w = img.at("width").get<std::size_t>(), h = img.at("height").get<std::size_t>();
      if (rgb.width != w || rgb.height != h) {
        throw DataError("image '" + file.string() + "' is " + std::to_string(rgb.width) + "x" +
                        std::to_string(rgb.height) + ", manifest says " + std::to_string(w) +
                        "x" + std::to_string(h));
      }
      SceneSample s;
      s.height = h;
      s.width = w;
      s.image = dequantize_image(rgb);
      by_id[id] = ds.samples.size();
      ds.samples.push_back(std::move(s));
    }

    for (const json& ann : manifest.at("annotations")) {
      const auto image_id = ann.at("image_id").get<std::uint64_t>();
      auto it = by_id.find(image_id);
      if (it == by_id.end()) {
        throw DataError("annotation " + ann.at("id").dump() + " references unknown image " +
                        std::to_string(image_id) + " in '" + manifest_path.string() + "'");
      }
      SceneSample& s = ds.samples[it->second];
      const json& seg = ann.at("segmentation");
      const auto size = seg.at("size").get<std::vector<std::size_t>>();
      if (size.size() != 2 || size[0] != s.height || size[1] != s.width) {
        throw DataError("annotation " + ann.at("id").dump() +
                        " mask size does not match its image in '" + manifest_path.string() +
                        "'");
      }
      Instance inst;
      inst.class_id = ann.at("category_id").get<int>();
      const auto bbox = ann.at("bbox").get<std::vector<double>>();
      if (bbox.size() != 4) throw DataError("annotation bbox must have 4 numbers");
      inst.bbox = Box{bbox[0], bbox[1], bbox[2], bbox[3]};
      inst.mask = rle_decode(seg.at("counts").get<std::vector<std::uint32_t>>(), s.height, s.width);
      s.instances.push_back(std::move(inst));
    }
  } catch (const json::exception& e) {
    throw DataError("malformed manifest '" + manifest_path.string() + "': " + e.what());
  }
  return ds;
}

}  // namespace recip
