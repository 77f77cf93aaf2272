#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "hmt/checkpoint.hpp"
#include "hmt/cli.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run hmt_run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = hmt::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("hmt_cli_test_" + std::to_string(std::rand()) + "_" +
                                        std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

// Small dataset shared by the subcommand tests.
void make_data(const TempDir& dir, const std::string& subjects = "4", const std::string& seed = "3") {
  const Run r = hmt_run({"gen-data", "--out", dir / "d.jsonl", "--subjects", subjects, "--face-dim", "6",
                         "--frames", "2", "--seed", seed});
  REQUIRE(r.code == 0);
}

std::vector<std::string> train_args(const TempDir& dir, const std::string& variant) {
  return {"train", "--data", dir / "d.jsonl", "--labels", dir / "d.labels.json", "--variant", variant,
          "--epochs", "2", "--hidden", "4", "--out-dir", dir / "out"};
}

}  // namespace

TEST_CASE("gen-data") {
  TempDir dir;
  SUBCASE("default flags give 180 samples") {
    const Run r = hmt_run({"gen-data", "--out", dir / "d.jsonl", "--face-dim", "4", "--frames", "1"});
    REQUIRE(r.code == 0);
    std::ifstream in(dir / "d.jsonl");
    std::size_t lines = 0;
    for (std::string l; std::getline(in, l);) lines += !l.empty();
    CHECK(lines == 180);
    CHECK(fs::exists(dir / "d.labels.json"));
    CHECK(r.out.find("fear") != std::string::npos);
  }
  SUBCASE("same seed gives byte-identical files") {
    REQUIRE(hmt_run({"gen-data", "--out", dir / "a.jsonl", "--subjects", "3", "--face-dim", "4", "--seed", "7"}).code == 0);
    REQUIRE(hmt_run({"gen-data", "--out", dir / "b.jsonl", "--subjects", "3", "--face-dim", "4", "--seed", "7"}).code == 0);
    CHECK(slurp(dir / "a.jsonl") == slurp(dir / "b.jsonl"));
  }
  SUBCASE("too few subjects for the fold count is rejected by cv") {
    make_data(dir, "5");
    const Run r = hmt_run({"cv", "--data", dir / "d.jsonl", "--labels", dir / "d.labels.json", "--folds", "10",
                           "--epochs", "1", "--out-dir", dir / "cv"});
    CHECK(r.code != 0);
    CHECK(r.err.find("subjects") != std::string::npos);
    CHECK_FALSE(fs::exists(dir / "cv/reports"));
  }
}

TEST_CASE("train and eval") {
  TempDir dir;
  make_data(dir);
  SUBCASE("HMT-4 writes a five-layer checkpoint that eval can read") {
    REQUIRE(hmt_run(train_args(dir, "hmt-4")).code == 0);
    const hmt::Checkpoint ck = hmt::load_checkpoint(dir / "out/checkpoints/model.json");
    CHECK(ck.params.blocks().size() == 10);
    CHECK(ck.config.epochs == 2);
    const Run e = hmt_run({"eval", "--checkpoint", dir / "out/checkpoints/model.json", "--data", dir / "d.jsonl",
                           "--out-dir", dir / "out"});
    REQUIRE(e.code == 0);
    CHECK(e.out.find("Fusion") != std::string::npos);
    CHECK(fs::exists(dir / "out/reports/eval.json"));
    CHECK(fs::exists(dir / "out/figures/eval_fusion_y.svg"));
  }
  SUBCASE("Joint-1L history has empty L_f, L_b and L_d columns") {
    REQUIRE(hmt_run(train_args(dir, "joint-1l")).code == 0);
    std::istringstream csv(slurp(dir / "out/history/model.csv"));
    std::string header, row;
    std::getline(csv, header);
    std::getline(csv, row);
    CHECK(row.rfind("0,0.001,,,", 0) == 0);
    const auto lw_end = row.find(',', std::string("0,0.001,,,").size());
    CHECK(row.substr(lw_end, 2) == ",,");
  }
  SUBCASE("same seed gives identical history") {
    REQUIRE(hmt_run(train_args(dir, "hmt-4")).code == 0);
    const std::string first = slurp(dir / "out/history/model.csv");
    REQUIRE(hmt_run(train_args(dir, "hmt-4")).code == 0);
    CHECK(slurp(dir / "out/history/model.csv") == first);
  }
  SUBCASE("SEP writes one history per branch") {
    REQUIRE(hmt_run(train_args(dir, "sep")).code == 0);
    CHECK(fs::exists(dir / "out/history/model_face.csv"));
    CHECK(fs::exists(dir / "out/history/model_body.csv"));
  }
  SUBCASE("reduced epochs scale the learning-rate drop") {
    auto args = train_args(dir, "hmt-4");
    args[8] = "4";
    REQUIRE(hmt_run(args).code == 0);
    const std::string csv = slurp(dir / "out/history/model.csv");
    CHECK(csv.find("\n2,0.001,") != std::string::npos);
    CHECK(csv.find("\n3,0.0001") != std::string::npos);
  }
  SUBCASE("config file values apply unless a flag overrides them") {
    {
      std::ofstream cfg(dir / "cfg.json");
      cfg << R"({"epochs": 3, "variant": "joint-1l", "lr_drop_epoch": 2})";
    }
    REQUIRE(hmt_run({"train", "--config", dir / "cfg.json", "--data", dir / "d.jsonl", "--labels",
                     dir / "d.labels.json", "--hidden", "4", "--epochs", "2", "--out-dir", dir / "out"})
                .code == 0);
    const hmt::Checkpoint ck = hmt::load_checkpoint(dir / "out/checkpoints/model.json");
    CHECK(ck.config.epochs == 2);
    CHECK(ck.config.variant.method == hmt::Method::Joint1L);
    CHECK(ck.config.lr_drop_epoch == 2);
  }
  SUBCASE("unknown config keys are rejected") {
    {
      std::ofstream cfg(dir / "cfg.json");
      cfg << R"({"epoch": 3})";
    }
    const Run r = hmt_run({"train", "--config", dir / "cfg.json", "--data", dir / "d.jsonl", "--labels",
                           dir / "d.labels.json", "--out-dir", dir / "out"});
    CHECK(r.code != 0);
    CHECK(r.err.find("epoch") != std::string::npos);
  }
  SUBCASE("bad input leaves no partial outputs") {
    {
      std::ofstream bad(dir / "bad.jsonl");
      bad << "{\"id\": 1}\n";
    }
    const Run r = hmt_run({"train", "--data", dir / "bad.jsonl", "--labels", dir / "d.labels.json", "--out-dir",
                           dir / "bad_out"});
    CHECK(r.code != 0);
    CHECK(r.err.find("line 1") != std::string::npos);
    CHECK_FALSE(fs::exists(dir / "bad_out"));
  }
}

TEST_CASE("cv outputs") {
  TempDir dir;
  make_data(dir);
  const std::vector<std::string> args{"cv", "--data", dir / "d.jsonl", "--labels", dir / "d.labels.json",
                                      "--folds", "2", "--iterations", "2", "--epochs", "1", "--hidden", "4",
                                      "--quiet", "--out-dir", dir / "cv"};
  const Run r = hmt_run(args);
  REQUIRE(r.code == 0);
  const json summary = json::parse(slurp(dir / "cv/reports/cv_summary.json"));
  CHECK(summary["training_runs"] == 4);
  CHECK(summary["runs"].size() == 4);
  bool fusion = false;
  for (const auto& p : summary["pairings"]) {
    if (p["key"] == "fusion:y") {
      fusion = true;
      CHECK(p["mean"].contains("balanced_accuracy"));
    }
  }
  CHECK(fusion);
  for (const char* f : {"cv_body_y.svg", "cv_body_y_body.svg", "cv_face_y.svg", "cv_face_y_face.svg",
                        "cv_fusion_y.svg", "cv_fusion_y_counts.csv", "cv_fusion_y_normalized.csv"})
    CHECK(fs::exists(dir.path / "cv/figures" / f));
  CHECK(fs::exists(dir / "cv/reports/cv_table.txt"));
  CHECK(fs::exists(dir / "cv/reports/run_meta.json"));
  const std::string first = slurp(dir / "cv/reports/cv_summary.json");
  REQUIRE(hmt_run(args).code == 0);
  CHECK(slurp(dir / "cv/reports/cv_summary.json") == first);
}

TEST_CASE("gradcheck") {
  const Run ok = hmt_run({"gradcheck"});
  CHECK(ok.code == 0);
  CHECK(ok.out.find("fusion_fc.weight") != std::string::npos);
  const Run bad = hmt_run({"gradcheck", "--corrupt"});
  CHECK(bad.code != 0);
  CHECK(bad.out.find("FAIL") != std::string::npos);
  const Run face = hmt_run({"gradcheck", "--variant", "sep", "--sep-branch", "face"});
  CHECK(face.code == 0);
  CHECK(face.out.find("body_hidden.weight") != std::string::npos);
  // The installed binary reports the failure through its exit status.
  const std::string cmd = std::string(HMT_CLI_PATH) + " gradcheck --corrupt > /dev/null";
  CHECK(std::system(cmd.c_str()) != 0);
}

TEST_CASE("help documents defaults") {
  const Run r = hmt_run({"cv", "--help"});
  CHECK(r.code == 0);
  CHECK(r.out.find("--epochs UINT [200]") != std::string::npos);
  CHECK(r.out.find("--folds") != std::string::npos);
  CHECK(r.out.find("--config") != std::string::npos);
  const Run none = hmt_run({});
  CHECK(none.code != 0);
}

TEST_CASE("seed falls back to HMT_SEED") {
  TempDir dir;
  ::setenv("HMT_SEED", "7", 1);
  REQUIRE(hmt_run({"gen-data", "--out", dir / "env.jsonl", "--subjects", "2", "--face-dim", "3"}).code == 0);
  ::unsetenv("HMT_SEED");
  REQUIRE(hmt_run({"gen-data", "--out", dir / "flag.jsonl", "--subjects", "2", "--face-dim", "3", "--seed", "7"}).code == 0);
  REQUIRE(hmt_run({"gen-data", "--out", dir / "default.jsonl", "--subjects", "2", "--face-dim", "3"}).code == 0);
  CHECK(slurp(dir / "env.jsonl") == slurp(dir / "flag.jsonl"));
  CHECK(slurp(dir / "env.jsonl") != slurp(dir / "default.jsonl"));
}
