// recip: data generation, two-phase training, inference, evaluation and
// visualization for the reciprocal object/pixel detector.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "recip/cli/commands.hpp"

namespace {

using recip::RunConfig;

struct CommonFlags {
  std::string config_file;
  std::vector<std::string> sets;
  std::string data_dir;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_out_dir) {
  cmd->add_option("--config", f.config_file, "key=value configuration file");
  cmd->add_option("--set", f.sets, "override one config key (key=value), repeatable");
  cmd->add_option("--data", f.data_dir, "dataset directory (config: data_dir)");
  if (with_out_dir) cmd->add_option("--out-dir", f.out_dir, "output directory (config: out_dir)");
  cmd->add_option("--seed", f.seed, "random seed (config: seed)");
}

// defaults < config file < --set < dedicated flags
RunConfig resolve(const CommonFlags& f) {
  RunConfig cfg;
  if (!f.config_file.empty()) cfg.load_file(f.config_file);
  for (const auto& s : f.sets) cfg.set_assignment(s);
  if (!f.data_dir.empty()) cfg.set("data_dir", f.data_dir);
  if (!f.out_dir.empty()) cfg.set("out_dir", f.out_dir);
  if (f.seed) cfg.set("seed", std::to_string(*f.seed));
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reciprocal object/pixel detector with mask-based boundary refinement"};
  app.require_subcommand(1);
  std::string command = "recip";

  CommonFlags common;

  recip::GenDataOptions gen;
  std::string gen_out;
  auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic shapes dataset");
  gen_cmd->add_option("--seed", gen.seed, "dataset seed")->required();
  gen_cmd->add_option("--count", gen.count, "number of images")->required();
  gen_cmd->add_option("--out", gen_out, "output directory")->required();
  gen_cmd->add_flag("--force", gen.force, "replace a non-empty output directory");
  gen_cmd->add_option("--config", common.config_file, "key=value configuration file");
  gen_cmd->add_option("--set", common.sets, "override one config key (key=value), repeatable");

  recip::TrainOptions train;
  std::string resume;
  auto* train_cmd = app.add_subcommand("train", "phase one: train the detector");
  add_common(train_cmd, common, true);
  train_cmd->add_option("--resume", resume, "continue from a checkpoint written by train");
  train_cmd->add_flag("--quiet", train.quiet, "no progress lines");

  recip::TrainMbrmOptions mbrm;
  std::string mbrm_out;
  auto* mbrm_cmd = app.add_subcommand("train-mbrm", "phase two: train the boundary refinement module");
  add_common(mbrm_cmd, common, true);
  mbrm_cmd->add_option("--checkpoint", mbrm.checkpoint, "phase-one checkpoint")->required();
  mbrm_cmd->add_option("--out", mbrm_out, "output checkpoint (default: <out_dir>/model_mbrm.ckpt)");
  mbrm_cmd->add_flag("--quiet", mbrm.quiet, "no summary line");

  recip::InferOptions inf;
  auto* infer_cmd = app.add_subcommand("infer", "run the detector and write a results file");
  add_common(infer_cmd, common, false);
  infer_cmd->add_option("--checkpoint", inf.checkpoint, "model checkpoint")->required();
  infer_cmd->add_option("--out", inf.out, "results JSON path")->required();

  recip::EvalOptions ev;
  std::string ev_out;
  auto* eval_cmd = app.add_subcommand("eval", "score a results file against the dataset");
  add_common(eval_cmd, common, false);
  eval_cmd->add_option("--results", ev.results, "results JSON")->required();
  eval_cmd->add_option("--boxes", ev.boxes, "box source for AP^bb")
      ->check(CLI::IsMember({"regressed", "refined", "direct"}));
  eval_cmd->add_option("--out", ev_out, "report JSON path");

  recip::VizOptions viz;
  std::string viz_ckpt, viz_results;
  auto* viz_cmd = app.add_subcommand("viz", "draw detections over dataset images");
  add_common(viz_cmd, common, false);
  viz_cmd->add_option("--checkpoint", viz_ckpt, "model checkpoint (runs inference)");
  viz_cmd->add_option("--results", viz_results, "results JSON (instead of --checkpoint)");
  viz_cmd->add_option("--out", viz.out, "directory for PNG overlays")->required();
  viz_cmd->add_option("--limit", viz.limit, "number of images");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << recip::error_json(command, std::invalid_argument(e.what())) << '\n';
    return 2;
  }

  try {
    if (gen_cmd->parsed()) {
      command = "gen-data";
      gen.out = gen_out;
      recip::cmd_gen_data(gen, resolve(common));
    } else if (train_cmd->parsed()) {
      command = "train";
      if (!resume.empty()) train.resume = resume;
      recip::cmd_train(train, resolve(common));
    } else if (mbrm_cmd->parsed()) {
      command = "train-mbrm";
      if (!mbrm_out.empty()) mbrm.out = mbrm_out;
      recip::cmd_train_mbrm(mbrm, resolve(common));
    } else if (infer_cmd->parsed()) {
      command = "infer";
      recip::cmd_infer(inf, resolve(common));
    } else if (eval_cmd->parsed()) {
      command = "eval";
      if (!ev_out.empty()) ev.out = ev_out;
      recip::cmd_eval(ev, resolve(common));
    } else if (viz_cmd->parsed()) {
      command = "viz";
      if (!viz_ckpt.empty()) viz.checkpoint = viz_ckpt;
      if (!viz_results.empty()) viz.results = viz_results;
      recip::cmd_viz(viz, resolve(common));
    }
  } catch (const std::exception& e) {
    std::cerr << recip::error_json(command, e) << '\n';
    return 1;
  }
  return 0;
}
