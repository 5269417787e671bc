#include "recip/pipeline/results_io.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "recip/core/error.hpp"
#include "recip/datagen/rle.hpp"

namespace recip {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kResultsFormat = "recip-results";

json box_json(const Box& b) { return json::array({b.x, b.y, b.w, b.h}); }

Box box_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw DataError("box must be [x, y, w, h]");
  return Box{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

json summary_json(const ApSummary& s) {
  return {{"AP", s.ap},         {"AP50", s.ap50},       {"AP75", s.ap75},
          {"APs", s.ap_small},  {"APm", s.ap_medium},   {"APl", s.ap_large}};
}

json boundary_json(const BoundaryStats& b) {
  return {{"mean", b.mean},
          {"matched", b.matched},
          {"small_mean", b.small_mean},
          {"small_matched", b.small_matched}};
}

}  // namespace

std::string results_to_json(const std::vector<std::vector<DetectionResult>>& results) {
  json list = json::array();
  for (std::size_t i = 0; i < results.size(); ++i) {
    for (const DetectionResult& d : results[i]) {
      const Rle rle = rle_encode(d.mask);
      list.push_back({{"image_id", i},
                      {"class_id", d.class_id},
                      {"score", d.score},
                      {"box_regressed", box_json(d.regressed)},
                      {"box_refined", box_json(d.refined)},
                      {"mask_rle", {{"size", {rle.height, rle.width}}, {"counts", rle.counts}}}});
    }
  }
  const json doc = {{"format", kResultsFormat}, {"version", kResultsFormatVersion}, {"results", list}};
  return doc.dump(1) + "\n";
}

std::vector<std::vector<DetectionResult>> results_from_json(const std::string& text,
                                                            std::size_t image_count) {
  std::vector<std::vector<DetectionResult>> out(image_count);
  try {
    const json doc = json::parse(text);
    if (!doc.is_object() || doc.value("format", "") != kResultsFormat) {
      throw DataError("not a results file (missing format tag)");
    }
    const int version = doc.at("version").get<int>();
    if (version != kResultsFormatVersion) {
      throw DataError("unsupported results version " + std::to_string(version) + " (expected " +
                      std::to_string(kResultsFormatVersion) + ")");
    }
    for (const json& r : doc.at("results")) {
      const std::size_t image_id = r.at("image_id").get<std::size_t>();
      if (image_id >= image_count) {
        throw DataError("result references image " + std::to_string(image_id) + " but only " +
                        std::to_string(image_count) + " images are loaded");
      }
      DetectionResult d;
      d.class_id = r.at("class_id").get<int>();
      d.score = r.at("score").get<double>();
      d.regressed = box_from_json(r.at("box_regressed"));
      d.refined = box_from_json(r.at("box_refined"));
      const json& m = r.at("mask_rle");
      const auto size = m.at("size");
      d.mask = rle_decode(m.at("counts").get<std::vector<std::uint32_t>>(),
                          size.at(0).get<std::size_t>(), size.at(1).get<std::size_t>());
      out[image_id].push_back(std::move(d));
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed results: ") + e.what());
  }
  return out;
}

void write_results(const std::vector<std::vector<DetectionResult>>& results,
                   const fs::path& path) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    out << results_to_json(results);
    if (!out) throw DataError("cannot write '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

std::vector<std::vector<DetectionResult>> read_results(const fs::path& path,
                                                       std::size_t image_count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read results '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return results_from_json(ss.str(), image_count);
  } catch (const DataError& e) {
    throw DataError("'" + path.string() + "': " + e.what());
  }
}

std::string report_to_json(const EvalReport& r) {
  const json doc = {{"boxes", box_source_name(r.source)},
                    {"images", r.images},
                    {"detections", r.detections},
                    {"bbox", summary_json(r.box)},
                    {"mask", summary_json(r.mask)},
                    {"mask_iou", {{"mean", r.mean_mask_iou}, {"matched", r.mask_matched}}},
                    {"boundary_error",
                     {{"regressed", boundary_json(r.regressed)},
                      {"refined", boundary_json(r.refined)},
                      {"direct", boundary_json(r.direct)}}}};
  return doc.dump(1) + "\n";
}

}  // namespace recip
