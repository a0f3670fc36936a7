#include <fstream>
#include <sstream>

#include "doctest.h"
#include "gzsl/app.hpp"
#include "gzsl/io.hpp"
#include "gzsl/vendor_json.hpp"
#include "support.hpp"

using namespace gzsl;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = app::run(args, out, err);
  return {code, out.str(), err.str()};
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST_CASE("usage errors exit with 1") {
  CHECK(cli({}).code == app::kUsage);
  CHECK(cli({"frobnicate"}).code == app::kUsage);
  CHECK(cli({"eval", "--model", "m"}).code == app::kUsage);
  CHECK(cli({"train", "--phase", "4", "--data", "d", "--out", "o"}).code == app::kUsage);
  CHECK(cli({"train", "--phase", "1"}).code == app::kUsage);
  CHECK(cli({"--help"}).code == app::kOk);
}

TEST_CASE("validation failures exit with 2") {
  const auto dir = test::scratch_dir("cli_validation");
  write(dir / "bad_spec.json", R"({"rho": 2.0})");
  CHECK(cli({"gen-data", "--spec", (dir / "bad_spec.json").string(), "--out", (dir / "d").string()}).code ==
        app::kValidation);
  write(dir / "unknown.json", R"({"flavour": 1})");
  CHECK(cli({"train", "--print-config", "--config", (dir / "unknown.json").string()}).code == app::kValidation);
  write(dir / "broken.json", "{");
  CHECK(cli({"train", "--print-config", "--config", (dir / "broken.json").string()}).code == app::kValidation);
  // Missing dataset and missing prerequisite checkpoints.
  CHECK(cli({"train", "--phase", "1", "--data", (dir / "nowhere").string(), "--out", (dir / "m").string()}).code ==
        app::kValidation);
}

TEST_CASE("print-config dumps every default") {
  const auto r = cli({"train", "--print-config"});
  CHECK(r.code == app::kOk);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j.at("phase3").at("synth_fraction") == 0.5);
  CHECK(j.at("phase3").at("bl_orientation") == "textual-intent");
  CHECK(j.at("phase2").at("decoder").at("bandwidths").size() == 5);
}

TEST_CASE("small end-to-end recipe through the command line") {
  const auto dir = test::scratch_dir("cli_e2e");
  const std::string data = (dir / "data").string(), model = (dir / "model").string();
  write(dir / "spec.json", R"({"points_per_scene": 64, "train_scenes": 6, "eval_scenes": 6})");
  write(dir / "cfg.json", R"({"phase1": {"hidden": [16], "feature_dim": 8, "epochs": 2},
                              "phase2": {"decoder": {"noise_dim": 4, "hidden": [16]}, "epochs": 2},
                              "phase3": {"epochs": 2}})");
  REQUIRE(cli({"gen-data", "--spec", (dir / "spec.json").string(), "--out", data}).code == app::kOk);
  const std::string classes = io::read_text(dir / "data" / "classes.json");
  REQUIRE(cli({"gen-data", "--spec", (dir / "spec.json").string(), "--out", data}).code == app::kOk);
  CHECK(io::read_text(dir / "data" / "classes.json") == classes);
  CHECK(fs::exists(dir / "data" / "manifest.json"));

  const std::string cfg = (dir / "cfg.json").string();
  const auto p3_early = cli({"train", "--phase", "3", "--config", cfg, "--data", data, "--out", model});
  CHECK(p3_early.code == app::kValidation);
  for (const char* p : {"1", "2", "3"}) {
    REQUIRE(cli({"train", "--phase", p, "--config", cfg, "--data", data, "--out", model}).code == app::kOk);
  }
  for (const char* f : {"encoder.ckpt", "decoder.ckpt", "classifier.ckpt", "phase1.jsonl", "phase2.jsonl",
                        "phase3.jsonl", "config.phase3.json", "manifest.json"}) {
    CAPTURE(f);
    CHECK(fs::exists(dir / "model" / f));
  }
  const auto manifest = nlohmann::json::parse(io::read_text(dir / "model" / "manifest.json"));
  CHECK(manifest.at("artifacts").contains("phase3_checkpoint"));
  CHECK(manifest.at("seeds").at("phase2") == 3);

  const std::string none = (dir / "none.json").string(), zero = (dir / "zero.json").string();
  REQUIRE(cli({"eval", "--model", model, "--data", data, "--calibration", "none", "--out", none}).code == app::kOk);
  REQUIRE(cli({"eval", "--model", model, "--data", data, "--calibration", "static:0", "--out", zero}).code ==
          app::kOk);
  CHECK(io::read_text(none) == io::read_text(zero));
  const std::string first = io::read_text(none), manifest_first = io::read_text(dir / "manifest.json");
  REQUIRE(cli({"eval", "--model", model, "--data", data, "--calibration", "none", "--out", none}).code == app::kOk);
  CHECK(io::read_text(none) == first);
  CHECK(io::read_text(dir / "manifest.json") == manifest_first);
  CHECK(cli({"eval", "--model", model, "--data", data, "--calibration", "static:7", "--out", none}).code ==
        app::kValidation);

  const std::string dyn = (dir / "dyn.json").string();
  REQUIRE(cli({"eval", "--model", model, "--data", data, "--calibration", "dynamic", "--out", dyn}).code == app::kOk);
  CHECK(nlohmann::json::parse(io::read_text(dyn)).contains("u_bar"));

  const std::string csv = (dir / "sweep.csv").string(), js = (dir / "sweep.json").string();
  REQUIRE(cli({"sweep-eta", "--model", model, "--data", data, "--grid", "0:1:0.25", "--out", csv}).code == app::kOk);
  CHECK(io::read_text(csv).rfind("eta,", 0) == 0);
  REQUIRE(cli({"sweep-eta", "--model", model, "--data", data, "--grid", "0:1:0.25", "--out", js}).code == app::kOk);
  CHECK(nlohmann::json::parse(io::read_text(js)).size() == 6);

  const std::string rel = (dir / "rel.json").string();
  REQUIRE(cli({"diagnose", "--model", model, "--data", data, "--bins", "5", "--out", rel}).code == app::kOk);
  CHECK(nlohmann::json::parse(io::read_text(rel)).at("reliability").at("bins").size() == 5);

  // Kernel selection does not change results.
  const std::string scalar = (dir / "scalar.json").string();
  REQUIRE(cli({"--kernels", "scalar", "eval", "--model", model, "--data", data, "--out", scalar}).code == app::kOk);
  CHECK(io::read_text(scalar) == first);

  // Corrupted data is rejected before training or evaluation.
  std::string train = io::read_text(dir / "data" / "train.jsonl");
  const auto pos = train.find("\"labels\":[");
  REQUIRE(pos != std::string::npos);
  train.replace(pos + 10, 1, "7");
  write(dir / "data" / "train.jsonl", train);
  CHECK(cli({"eval", "--model", model, "--data", data, "--out", none}).code == app::kValidation);
}

TEST_CASE("selfcheck passes") {
  const auto r = cli({"selfcheck"});
  CHECK(r.code == app::kOk);
  CHECK(r.out.find("FAIL") == std::string::npos);
}
