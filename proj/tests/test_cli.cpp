#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "laneseg/data.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace laneseg;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = slurp(e.path());
  }
  return files;
}

}  // namespace

TEST(Cli, SynthIsByteIdenticalAcrossRuns) {
  laneseg::testing::TempDir dir("cli_synth");
  for (const char* sub : {"a", "b"}) {
    const auto r = run({"synth", "--n", "6", "--seed", "3", "--size", "32x40", "--out", (dir / sub).string()});
    ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  }
  const auto a = tree(dir / "a");
  EXPECT_EQ(a.size(), 1u + 6u * 3u);
  EXPECT_EQ(a, tree(dir / "b"));
}

TEST(Cli, ParamsMatchesOracle) {
  const auto r = run({"params", "--arch", "unet_attn"});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_NE(r.out.find(std::to_string(oracle::attention_unet_parameters(44))), std::string::npos) << r.out;
}

TEST(Cli, UsageErrorsExitWithOne) {
  EXPECT_EQ(run({}).code, cli::kExitUsage);
  EXPECT_EQ(run({"bogus"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"synth", "--out", "x"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"synth", "--n", "2", "--size", "big", "--out", "x"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"params", "--arch", "resnet"}).code, cli::kExitUsage);
}

TEST(Cli, HelpExitsCleanly) {
  const auto r = run({"--help"});
  EXPECT_EQ(r.code, cli::kExitOk);
  EXPECT_NE(r.out.find("synth"), std::string::npos);
}

TEST(Cli, RuntimeFailuresExitWithTwo) {
  laneseg::testing::TempDir dir("cli_fail");
  const auto r = run({"extract", "--video", (dir / "missing.mp4").string(), "--out", (dir / "f").string()});
  EXPECT_EQ(r.code, cli::kExitFailure);
  EXPECT_NE(r.err.find("missing.mp4"), std::string::npos) << r.err;
  EXPECT_EQ(run({"eval", "--ckpt", (dir / "nock").string(), "--data", (dir / "nodata").string(), "--report",
                 (dir / "r.json").string()})
                .code,
            cli::kExitFailure);
}

TEST(Cli, EvalOnGroundTruthMasksScoresPerfectly) {
  laneseg::testing::TempDir dir("cli_eval");
  ASSERT_EQ(run({"synth", "--n", "5", "--seed", "1", "--size", "32x40", "--val-fraction", "0.4", "--out",
                 (dir / "data").string()})
                .code,
            cli::kExitOk);
  const DatasetManifest m = load_manifest((dir / "data").string());
  fs::create_directories(dir / "pred");
  for (const auto& e : m.entries) {
    const std::string stem = fs::path(e.frame).stem().string();
    const Sample s = load_sample(m, e);
    write_mask(dir / "pred" / (stem + "_left.png"), s.mask_left);
    write_mask(dir / "pred" / (stem + "_right.png"), s.mask_right);
  }
  const auto r = run({"eval", "--pred", (dir / "pred").string(), "--data", (dir / "data").string(), "--split", "all",
                      "--report", (dir / "report.json").string()});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const auto report = nlohmann::json::parse(slurp(dir / "report.json"));
  for (const char* k : {"accuracy", "precision", "recall", "iou_fg", "iou_mean"}) {
    EXPECT_DOUBLE_EQ(report["pixel"][k].get<double>(), 1.0) << k;
  }
  EXPECT_EQ(report["frame"]["total"].get<int>(), 5);
  EXPECT_EQ(report["frame"]["both"].get<int>(), 5);
}

TEST(Cli, EvalRequiresExactlyOneSource) {
  laneseg::testing::TempDir dir("cli_eval2");
  EXPECT_EQ(run({"eval", "--data", (dir / "d").string(), "--report", (dir / "r.json").string()}).code,
            cli::kExitUsage);
}

TEST(Cli, TrainEvalInferPipeline) {
  laneseg::testing::TempDir dir("cli_pipe");
  const std::string data = (dir / "data").string(), ckpt = (dir / "ckpt").string();
  ASSERT_EQ(run({"synth", "--n", "4", "--seed", "2", "--size", "32x32", "--val-fraction", "0.25", "--out", data}).code,
            cli::kExitOk);
  {
    std::ofstream cfg(dir / "cfg.json");
    cfg << R"({"model":{"input_height":32,"input_width":32,"base_width":4}})";
  }
  const auto t = run({"train", "--arch", "unet_attn", "--data", data, "--config", (dir / "cfg.json").string(), "--out",
                      ckpt, "--epochs", "1", "--batch-size", "2", "--seed", "5"});
  ASSERT_EQ(t.code, cli::kExitOk) << t.err;
  EXPECT_NE(t.out.find("epoch 1"), std::string::npos) << t.out;
  EXPECT_TRUE(fs::exists(dir / "ckpt" / "last" / "weights.bin"));

  const auto e = run({"eval", "--ckpt", ckpt + "/last", "--data", data, "--report", (dir / "r.json").string()});
  ASSERT_EQ(e.code, cli::kExitOk) << e.err;
  const auto report = nlohmann::json::parse(slurp(dir / "r.json"));
  EXPECT_EQ(report["frame"]["total"].get<int>(), 1);

  const auto i = run({"infer", "--ckpt", ckpt + "/last", "--input", data + "/frames", "--out",
                      (dir / "inf").string(), "--overlay", "--deviation"});
  ASSERT_EQ(i.code, cli::kExitOk) << i.err;
  EXPECT_TRUE(fs::exists(dir / "inf" / "deviation.jsonl"));
  int lines = 0;
  std::ifstream dev(dir / "inf" / "deviation.jsonl");
  for (std::string line; std::getline(dev, line); ++lines) {
    const auto rec = nlohmann::json::parse(line);
    EXPECT_TRUE(rec.contains("dev_px"));
  }
  EXPECT_EQ(lines, 4);
  const cv::Mat lane = read_mask(dir / "inf" / "masks" / (fs::path(load_manifest(data).entries[0].frame).stem().string() + "_lane.png"));
  EXPECT_EQ(lane.size(), cv::Size(32, 32));
}
