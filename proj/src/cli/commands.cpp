#include "recip/cli/commands.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>

#include "json.hpp"
#include "recip/cli/viz.hpp"
#include "recip/core/error.hpp"
#include "recip/datagen/dataset.hpp"
#include "recip/datagen/png_io.hpp"
#include "recip/model/checkpoint.hpp"
#include "recip/pipeline/detector.hpp"
#include "recip/pipeline/evaluate.hpp"
#include "recip/pipeline/results_io.hpp"

namespace recip {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    out << text;
    if (!out) throw DataError("cannot write '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

fs::path parent_or_cwd(const fs::path& p) {
  return p.has_parent_path() ? p.parent_path() : fs::path(".");
}

std::vector<SceneSample> load_images(const RunConfig& cfg) {
  Dataset ds = load_dataset(cfg.get("data_dir"));
  const std::size_t size = cfg.get_size("image_size");
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const SceneSample& s = ds.samples[i];
    if (s.height != size || s.width != size) {
      throw ShapeError("image " + std::to_string(i) + " is " + std::to_string(s.height) + "x" +
                       std::to_string(s.width) + " but image_size is " + std::to_string(size));
    }
  }
  return std::move(ds.samples);
}

Detector make_detector(const RunConfig& cfg) {
  return Detector(cfg.model(), cfg.get_u64("seed"), cfg.mbrm_scope(), cfg.mbrm_gamma());
}

Detector load_detector(const RunConfig& cfg, const fs::path& checkpoint) {
  Detector det = make_detector(cfg);
  det.load_checkpoint(read_checkpoint(checkpoint), false);
  return det;
}

std::string csv_row(std::size_t it, double lr, const LossBreakdown& l) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g,%.9g,%zu,%.9g\n", it, lr, l.total, l.cls,
                l.reg, l.mask, l.positives, l.grad_norm);
  return buf;
}

constexpr const char* kCsvHeader = "iteration,lr,total,cls,reg,mask,positives,grad_norm\n";

// Keeps the header and rows with iteration <= last.
void truncate_loss_log(const fs::path& path, std::size_t last) {
  std::string kept = kCsvHeader;
  std::ifstream in(path);
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    if (std::stoull(line.substr(0, line.find(','))) <= last) kept += line + "\n";
  }
  in.close();
  write_text_atomic(path, kept);
}

}  // namespace

void write_run_meta(const fs::path& dir, const std::string& command, const RunConfig& cfg) {
  json config = json::object();
  for (const auto& key : RunConfig::known_keys()) config[key] = cfg.get(key);
  const json meta = {{"command", command},
                     {"tool_version", kToolVersion},
                     {"seed", cfg.get("seed")},
                     {"formats",
                      {{"dataset", kDatasetFormatVersion},
                       {"checkpoint", kCheckpointVersion},
                       {"results", kResultsFormatVersion}}},
                     {"config", config}};
  fs::create_directories(dir);
  write_text_atomic(dir / kRunMetaName, meta.dump(1) + "\n");
}

void cmd_gen_data(const GenDataOptions& opt, const RunConfig& cfg) {
  cfg.validate();
  if (fs::exists(opt.out)) {
    if (!fs::is_directory(opt.out)) {
      throw DataError("'" + opt.out.string() + "' exists and is not a directory");
    }
    if (!fs::is_empty(opt.out)) {
      if (!opt.force) {
        throw DataError("output directory '" + opt.out.string() +
                        "' is not empty (use --force to overwrite)");
      }
      fs::remove_all(opt.out);
    }
  }
  fs::create_directories(opt.out);
  write_dataset(generate_dataset(opt.seed, opt.count, cfg.scene()), opt.out);
  RunConfig meta = cfg;
  meta.set("seed", std::to_string(opt.seed));
  meta.set("data_dir", opt.out.string());
  write_run_meta(opt.out, "gen-data", meta);
}

void cmd_train(const TrainOptions& opt, const RunConfig& cfg) {
  cfg.validate();
  const TrainConfig tc = cfg.train();
  const std::vector<SceneSample> data = load_images(cfg);
  if (data.empty()) throw DataError("training set '" + cfg.get("data_dir") + "' has no images");
  const fs::path out = cfg.get("out_dir");
  fs::create_directories(out);
  write_run_meta(out, "train", cfg);

  Detector det = make_detector(cfg);
  std::size_t start = 0;
  const fs::path log_path = out / kLossLog;
  if (opt.resume) {
    start = det.load_checkpoint(read_checkpoint(*opt.resume), true);
    if (start > tc.iterations) {
      throw DataError("checkpoint is at iteration " + std::to_string(start) +
                      ", beyond the configured " + std::to_string(tc.iterations));
    }
    truncate_loss_log(log_path, start);
  } else {
    write_text_atomic(log_path, kCsvHeader);
  }

  std::ofstream log(log_path, std::ios::app);
  const std::size_t every = cfg.get_size("checkpoint_every");
  train_range(det, data, tc, start, tc.iterations, [&](std::size_t it, const LossBreakdown& l) {
    log << csv_row(it, learning_rate(tc, it - 1), l);
    log.flush();
    if (!opt.quiet && (it % 50 == 0 || it == tc.iterations)) {
      std::printf("iter %zu/%zu  total %.4f  cls %.4f  reg %.4f  mask %.4f\n", it, tc.iterations,
                  l.total, l.cls, l.reg, l.mask);
      std::fflush(stdout);
    }
    if (every > 0 && it % every == 0 && it != tc.iterations) {
      char name[32];
      std::snprintf(name, sizeof name, "ckpt_%06zu.ckpt", it);
      write_checkpoint(det.to_checkpoint(true, it), out / name);
    }
  });
  write_checkpoint(det.to_checkpoint(true, tc.iterations), out / kFinalCheckpoint);
}

void cmd_train_mbrm(const TrainMbrmOptions& opt, const RunConfig& cfg) {
  cfg.validate();
  if (!fs::exists(opt.checkpoint)) {
    throw DataError("train-mbrm needs a phase-one checkpoint; '" + opt.checkpoint.string() +
                    "' does not exist (run `train` first)");
  }
  Checkpoint ckpt = read_checkpoint(opt.checkpoint);
  Detector det = make_detector(cfg);
  det.load_checkpoint(ckpt, false);
  det.mbrm.gamma = cfg.mbrm_gamma();

  const std::vector<SceneSample> data = load_images(cfg);
  const std::vector<MbrmSample> samples = collect_mbrm_samples(det, data, cfg.infer());
  if (samples.empty()) {
    throw DataError("no detection of the phase-one model matches a ground-truth box; nothing to "
                    "train the refinement module on");
  }
  const MbrmTrainReport report = train_mbrm(samples, det.mbrm, cfg.mbrm_train());

  // Only the refinement records change; every other tensor is copied as read.
  std::vector<float> kernel(report.params.kernel.begin(), report.params.kernel.end());
  const std::size_t n = kernel.size();
  ckpt.set(kMbrmKernelRecord, Tensor({n}, std::move(kernel)));
  ckpt.set(kMbrmBiasRecord, Tensor({1}, static_cast<float>(report.params.bias)));

  const fs::path out_dir = cfg.get("out_dir");
  const fs::path out = opt.out ? *opt.out : out_dir / kMbrmCheckpoint;
  fs::create_directories(parent_or_cwd(out));
  write_checkpoint(ckpt, out);
  write_run_meta(parent_or_cwd(out), "train-mbrm", cfg);

  std::string csv = "iteration,loss\n";
  for (std::size_t i = 0; i < report.loss_history.size(); ++i) {
    char row[64];
    std::snprintf(row, sizeof row, "%zu,%.9g\n", i + 1, report.loss_history[i]);
    csv += row;
  }
  write_text_atomic(parent_or_cwd(out) / "mbrm_loss.csv", csv);
  if (!opt.quiet) {
    std::printf("trained refinement on %zu detections; loss %.4f -> %.4f\n", samples.size(),
                report.loss_history.front(), report.loss_history.back());
  }
}

void cmd_infer(const InferOptions& opt, const RunConfig& cfg) {
  cfg.validate();
  Detector det = load_detector(cfg, opt.checkpoint);
  const std::vector<SceneSample> data = load_images(cfg);
  const InferConfig ic = cfg.infer();
  std::vector<std::vector<DetectionResult>> results;
  results.reserve(data.size());
  for (const SceneSample& s : data) results.push_back(infer(det, s, ic));
  fs::create_directories(parent_or_cwd(opt.out));
  write_results(results, opt.out);
  write_run_meta(parent_or_cwd(opt.out), "infer", cfg);
}

void cmd_eval(const EvalOptions& opt, const RunConfig& cfg) {
  const BoxSource source = parse_box_source(opt.boxes);
  const std::vector<SceneSample> data = load_images(cfg);
  const auto results = read_results(opt.results, data.size());
  const EvalReport report = evaluate(results, data, source);
  std::fputs(format_report(report).c_str(), stdout);
  if (opt.out) {
    fs::create_directories(parent_or_cwd(*opt.out));
    write_text_atomic(*opt.out, report_to_json(report));
    write_run_meta(parent_or_cwd(*opt.out), "eval", cfg);
  }
}

void cmd_viz(const VizOptions& opt, const RunConfig& cfg) {
  if (!opt.checkpoint && !opt.results) {
    throw std::invalid_argument("viz needs --checkpoint or --results");
  }
  const std::vector<SceneSample> data = load_images(cfg);
  std::vector<std::vector<DetectionResult>> results;
  if (opt.results) {
    results = read_results(*opt.results, data.size());
  } else {
    cfg.validate();
    Detector det = load_detector(cfg, *opt.checkpoint);
    const InferConfig ic = cfg.infer();
    for (std::size_t i = 0; i < std::min(opt.limit, data.size()); ++i) {
      results.push_back(infer(det, data[i], ic));
    }
  }
  fs::create_directories(opt.out);
  for (std::size_t i = 0; i < std::min(opt.limit, data.size()); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%06zu.png", i);
    write_png((opt.out / name).string(), render_overlay(data[i], results[i]));
  }
  write_run_meta(opt.out, "viz", cfg);
}

std::string error_json(const std::string& command, const std::exception& e) {
  std::string kind = "error";
  if (dynamic_cast<const ShapeError*>(&e)) {
    kind = "shape_mismatch";
  } else if (dynamic_cast<const ConfigError*>(&e)) {
    kind = "config";
  } else if (dynamic_cast<const DataError*>(&e)) {
    kind = "data";
  } else if (dynamic_cast<const NumericError*>(&e)) {
    kind = "numeric";
  } else if (dynamic_cast<const std::invalid_argument*>(&e)) {
    kind = "invalid_argument";
  }
  const json j = {{"command", command}, {"error", kind}, {"message", e.what()}};
  return j.dump();
}

}  // namespace recip
