#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include "doctest.h"
#include "json.hpp"
#include "recip/cli/commands.hpp"
#include "recip/cli/run_config.hpp"
#include "recip/datagen/dataset.hpp"
#include "recip/model/checkpoint.hpp"
#include "recip/pipeline/detector.hpp"

using namespace recip;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Run run_cli(const std::string& args) {
  const fs::path dir = fs::temp_directory_path();
  const fs::path out = dir / "recip_cli_stdout.txt", err = dir / "recip_cli_stderr.txt";
  const std::string cmd = std::string(RECIP_CLI_PATH) + " " + args + " > " + out.string() + " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  return {WEXITSTATUS(status), slurp(out), slurp(err)};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("recip_cli_" + name);
  fs::remove_all(p);
  return p;
}

const std::string kTiny =
    " --set image_size=64 --set stem_channels=8 --set backbone_channels=8 --set pixel_hidden=16"
    " --set head_hidden=8 --set repr_dim=8 --set anchor_scales=16,24";

}  // namespace

TEST_CASE("config keys, values and files") {
  RunConfig cfg;
  CHECK(cfg.get_size("image_size") == 128);
  CHECK(cfg.get_double("infer_expand_ratio") == 1.2);
  CHECK(cfg.get_list("anchor_scales") == std::vector<double>{32, 48, 64});
  CHECK_THROWS_AS(cfg.set("learning_rate", "0.1"), ConfigError);
  CHECK_THROWS_AS(cfg.set_assignment("lr"), ConfigError);
  cfg.set("lr", "abc");
  CHECK_THROWS_AS(cfg.get_double("lr"), ConfigError);

  const fs::path file = fs::temp_directory_path() / "recip_cli_config.txt";
  std::ofstream(file) << "# comment\nlr = 0.05\n\nbatch_size=3  # trailing\n";
  RunConfig loaded;
  loaded.load_file(file);
  CHECK(loaded.get_double("lr") == 0.05);
  CHECK(loaded.get_size("batch_size") == 3);
  std::ofstream(file) << "lr = 0.05\nbogus = 1\n";
  try {
    RunConfig bad;
    bad.load_file(file);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }
  fs::remove(file);

  RunConfig invalid;
  invalid.set("image_size", "100");
  CHECK_THROWS(invalid.validate());
}

TEST_CASE("error reports are machine readable") {
  const json j = json::parse(error_json("train", ShapeError("bad shape")));
  CHECK(j["command"] == "train");
  CHECK(j["error"] == "shape_mismatch");
  CHECK(j["message"] == "bad shape");
  CHECK(json::parse(error_json("eval", DataError("x")))["error"] == "data");
}

TEST_CASE("gen-data protects existing output") {
  const fs::path dir = scratch("gen");
  CHECK(run_cli("gen-data --seed 1 --count 2 --out " + dir.string() + kTiny).code == 0);
  CHECK(load_dataset(dir).samples.size() == 2);
  CHECK(load_dataset(dir).samples[0].width == 64);
  const Run again = run_cli("gen-data --seed 1 --count 2 --out " + dir.string());
  CHECK(again.code == 1);
  CHECK(json::parse(again.err)["error"] == "data");
  CHECK(run_cli("gen-data --seed 2 --count 3 --out " + dir.string() + kTiny + " --force").code == 0);
  CHECK(load_dataset(dir).samples.size() == 3);
  const fs::path empty = scratch("gen_empty");
  CHECK(run_cli("gen-data --seed 1 --count 0 --out " + empty.string()).code == 0);
  CHECK(load_dataset(empty).samples.empty());
  fs::remove_all(dir);
  fs::remove_all(empty);
}

TEST_CASE("argument and ordering errors") {
  const Run bad = run_cli("eval --results r.json --boxes tight");
  CHECK(bad.code == 2);
  CHECK(json::parse(bad.err)["error"] == "invalid_argument");
  const Run missing = run_cli("train-mbrm --checkpoint /nonexistent/model.ckpt");
  CHECK(missing.code == 1);
  CHECK(json::parse(missing.err)["command"] == "train-mbrm");
  CHECK(json::parse(missing.err)["error"] == "data");
  CHECK(run_cli("train --set nonsense=1").code == 1);
}

TEST_CASE("train, refine, infer, evaluate and draw through the CLI") {
  const fs::path data = scratch("e2e_data"), run = scratch("e2e_run");
  REQUIRE(run_cli("gen-data --seed 4 --count 4 --out " + data.string() + kTiny).code == 0);
  const std::string common = " --data " + data.string() + kTiny;
  const Run train = run_cli("train --out-dir " + run.string() + common +
                            " --set iterations=4 --set checkpoint_every=2 --quiet");
  INFO(train.err);
  REQUIRE(train.code == 0);
  CHECK(fs::exists(run / "model.ckpt"));
  CHECK(fs::exists(run / "ckpt_000002.ckpt"));
  CHECK(fs::exists(run / "run_meta.json"));
  CHECK(json::parse(slurp(run / "run_meta.json"))["config"]["iterations"] == "4");
  std::ifstream log(run / "loss.csv");
  std::string line;
  std::size_t rows = 0;
  while (std::getline(log, line)) ++rows;
  CHECK(rows == 5);

  // Resuming from iteration 2 replays the same final state.
  const fs::path resumed = scratch("e2e_resume");
  REQUIRE(run_cli("train --out-dir " + resumed.string() + common + " --set iterations=4 --quiet --resume " +
                  (run / "ckpt_000002.ckpt").string())
              .code == 0);
  CHECK(slurp(resumed / "model.ckpt") == slurp(run / "model.ckpt"));

  const std::string loose = " --set score_threshold=0.0";
  const Run mbrm = run_cli("train-mbrm --checkpoint " + (run / "model.ckpt").string() + " --out-dir " +
                           run.string() + common + loose + " --set mbrm_iterations=5 --quiet");
  INFO(mbrm.err);
  REQUIRE(mbrm.code == 0);
  const Checkpoint refined = read_checkpoint(run / "model_mbrm.ckpt");
  CHECK(refined.contains(kMbrmKernelRecord));

  const fs::path results = run / "results.json";
  REQUIRE(run_cli("infer --checkpoint " + (run / "model_mbrm.ckpt").string() + " --out " + results.string() +
                  common + loose)
              .code == 0);
  const json r = json::parse(slurp(results));
  CHECK(r["format"] == "recip-results");
  const Run ev = run_cli("eval --results " + results.string() + " --boxes direct --out " +
                         (run / "report.json").string() + common);
  CHECK(ev.code == 0);
  CHECK(ev.out.find("AP") != std::string::npos);
  CHECK(json::parse(slurp(run / "report.json")).contains("bbox"));

  const fs::path viz = run / "viz";
  CHECK(run_cli("viz --results " + results.string() + " --out " + viz.string() + " --limit 2" + common).code == 0);
  CHECK(fs::exists(viz / "000001.png"));

  // A checkpoint from a different architecture is refused with a shape error.
  const Run wrong = run_cli("infer --checkpoint " + (run / "model.ckpt").string() + " --out " +
                            (run / "x.json").string() + common + " --set repr_dim=4");
  CHECK(wrong.code == 1);
  CHECK(json::parse(wrong.err)["error"] == "shape_mismatch");
  for (const auto& d : {data, run, resumed}) fs::remove_all(d);
}
