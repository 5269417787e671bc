#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "recip/pipeline/evaluate.hpp"
#include "recip/pipeline/infer.hpp"

namespace recip {

inline constexpr int kResultsFormatVersion = 1;

/// {"format": "recip-results", "version": 1, "results": [{image_id, class_id,
/// score, box_regressed, box_refined, mask_rle}, ...]} with one list entry
/// per detection, image by image. Masks are column-major RLE.
std::string results_to_json(const std::vector<std::vector<DetectionResult>>& results);

/// Inverse of results_to_json; `image_count` sizes the outer list and bounds
/// image ids. Throws DataError on unknown versions or malformed records.
std::vector<std::vector<DetectionResult>> results_from_json(const std::string& text,
                                                            std::size_t image_count);

void write_results(const std::vector<std::vector<DetectionResult>>& results,
                   const std::filesystem::path& path);
std::vector<std::vector<DetectionResult>> read_results(const std::filesystem::path& path,
                                                       std::size_t image_count);

std::string report_to_json(const EvalReport& report);

}  // namespace recip
