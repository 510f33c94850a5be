#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "json.hpp"
#include "uaopose/gumlp.hpp"
#include "uaopose/synthetic.hpp"

namespace fs = std::filesystem;
using namespace uaopose;
using cli::run;

namespace {

struct Captured {
  int code;
  std::string out;
};

Captured run_captured(const std::vector<std::string>& args) {
  testing::internal::CaptureStdout();
  testing::internal::CaptureStderr();
  const int code = run(args);
  Captured c{code, testing::internal::GetCapturedStdout()};
  testing::internal::GetCapturedStderr();
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::size_t line_count(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

class CliTest : public testing::Test {
 protected:
  fs::path dir;

  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("uaopose_cli_" + std::string(testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  std::string p(const std::string& name) const { return (dir / name).string(); }

  // Small dataset plus a briefly trained toy model.
  void prepare_model(std::size_t n = 12) {
    ASSERT_EQ(run({"gen-data", "--n", std::to_string(n), "--noise-profile", "limbend:0.01", "--seed", "3",
                   "--out", p("data.jsonl")}),
              0);
    ASSERT_EQ(run_captured({"train", "--data", p("data.jsonl"), "--epochs", "2", "--batch", "4", "--blocks",
                            "1", "--channels", "8", "--spatial-mid", "17", "--out", p("train")})
                  .code,
              0);
  }
};

}  // namespace

TEST_F(CliTest, GenDataZeroNoiseAndChecksum) {
  const auto a = run_captured({"gen-data", "--n", "100", "--noise-profile", "uniform:0", "--seed", "5",
                               "--out", p("a.jsonl")});
  ASSERT_EQ(a.code, 0);
  const auto data = load_dataset(p("a.jsonl"));
  ASSERT_EQ(data.size(), 100u);
  for (const auto& s : data) EXPECT_TRUE(s.j2d == *s.j2d_clean);
  EXPECT_NE(a.out.find("samples: 100"), std::string::npos);
  EXPECT_NE(a.out.find("sha256: "), std::string::npos);

  const auto b = run_captured({"gen-data", "--n", "100", "--noise-profile", "uniform:0", "--seed", "5",
                               "--out", p("b.jsonl")});
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(slurp(p("a.jsonl")), slurp(p("b.jsonl")));
  EXPECT_TRUE(fs::exists(p("a.jsonl.run_config.json")));
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(run_captured({"gen-data", "--n", "0", "--out", p("x.jsonl")}).code, 2);
  EXPECT_EQ(run_captured({"gen-data", "--n", "5", "--noise-profile", "gauss:1", "--out", p("x.jsonl")}).code, 2);
  EXPECT_EQ(run_captured({"gen-data", "--n", "5", "--noise-profile", "uniform:-1", "--out", p("x.jsonl")}).code,
            2);
  EXPECT_EQ(run_captured({"gen-data", "--bogus"}).code, 2);
  EXPECT_EQ(run_captured({}).code, 2);
  EXPECT_EQ(run_captured({"refine", "--variant", "sideways"}).code, 2);
}

TEST_F(CliTest, MissingInputsExitThree) {
  EXPECT_EQ(run_captured({"train", "--data", p("nope.jsonl"), "--out", p("t")}).code, 3);
  EXPECT_EQ(run_captured({"refine", "--ckpt", p("nope.ckpt"), "--data", p("nope.jsonl"), "--out", p("r")}).code,
            3);
  EXPECT_EQ(run_captured({"gen-data", "--config", p("nope.json"), "--n", "1", "--out", p("x")}).code, 3);
}

TEST_F(CliTest, TrainWritesReproducibleArtifacts) {
  prepare_model();
  const std::string log = slurp(p("train/train_log.csv"));
  EXPECT_EQ(line_count(log), 1u + 2u);
  EXPECT_NO_THROW(load_checkpoint(p("train/model.ckpt")));

  const auto again = run_captured({"train", "--data", p("data.jsonl"), "--epochs", "2", "--batch", "4",
                                   "--blocks", "1", "--channels", "8", "--spatial-mid", "17", "--out",
                                   p("train2")});
  ASSERT_EQ(again.code, 0);
  EXPECT_EQ(slurp(p("train2/train_log.csv")), log);
  EXPECT_EQ(slurp(p("train2/model.ckpt")), slurp(p("train/model.ckpt")));

  // run_config.json differs only in the metadata block.
  auto a = nlohmann::json::parse(slurp(p("train/run_config.json")));
  auto b = nlohmann::json::parse(slurp(p("train2/run_config.json")));
  ASSERT_TRUE(a.contains("metadata"));
  a.erase("metadata");
  b.erase("metadata");
  a["paths"].erase("out");
  b["paths"].erase("out");
  EXPECT_EQ(a, b);
  EXPECT_EQ(a["train"]["epochs"], 2);
}

TEST_F(CliTest, ConfigFileWithFlagOverrides) {
  ASSERT_EQ(run({"gen-data", "--n", "8", "--seed", "1", "--out", p("d.jsonl")}), 0);
  std::ofstream(p("cfg.json")) << R"({"seed": 4, "model": {"blocks": 1, "channels": 8, "spatial_mid": 17},
                                    "train": {"epochs": 3, "batch": 4}})";
  ASSERT_EQ(run_captured({"train", "--config", p("cfg.json"), "--data", p("d.jsonl"), "--out", p("a")}).code, 0);
  EXPECT_EQ(line_count(slurp(p("a/train_log.csv"))), 4u);
  ASSERT_EQ(run_captured({"train", "--config", p("cfg.json"), "--data", p("d.jsonl"), "--epochs", "1", "--out",
                          p("b")})
                .code,
            0);
  EXPECT_EQ(line_count(slurp(p("b/train_log.csv"))), 2u);
  const auto cfg = nlohmann::json::parse(slurp(p("b/run_config.json")));
  EXPECT_EQ(cfg["seed"], 4);
  EXPECT_EQ(cfg["train"]["epochs"], 1);
  EXPECT_EQ(cfg["model"]["channels"], 8);

  std::ofstream(p("bad.json")) << "{ not json";
  EXPECT_EQ(run_captured({"train", "--config", p("bad.json"), "--data", p("d.jsonl"), "--out", p("c")}).code, 2);
}

TEST_F(CliTest, RefineZeroItersMatchesEval) {
  prepare_model();
  const auto r = run_captured({"refine", "--ckpt", p("train/model.ckpt"), "--data", p("data.jsonl"), "--iters",
                               "0", "--out", p("r0")});
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("digest equal: true"), std::string::npos);
  ASSERT_EQ(run_captured({"eval", "--ckpt", p("train/model.ckpt"), "--data", p("data.jsonl"), "--out", p("ev")})
                .code,
            0);
  EXPECT_EQ(slurp(p("r0/predictions.jsonl")), slurp(p("ev/predictions.jsonl")));
}

TEST_F(CliTest, RefineWritesTracesAndCurves) {
  prepare_model(10);
  const auto r = run_captured({"refine", "--ckpt", p("train/model.ckpt"), "--data", p("data.jsonl"), "--iters",
                               "4", "--jobs", "3", "--out", p("r")});
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("parameter digest before: "), std::string::npos);
  EXPECT_NE(r.out.find("parameter digest after: "), std::string::npos);
  EXPECT_NE(r.out.find("digest equal: true"), std::string::npos);
  EXPECT_EQ(line_count(slurp(p("r/predictions.jsonl"))), 10u);
  std::size_t traces = 0;
  for (const auto& e : fs::directory_iterator(p("r/traces"))) {
    ++traces;
    EXPECT_EQ(line_count(slurp(e.path())), 1u + 5u);
  }
  EXPECT_EQ(traces, 10u);
  EXPECT_EQ(line_count(slurp(p("r/curves.csv"))), 1u + 5u);

  const auto serial = run_captured({"refine", "--ckpt", p("train/model.ckpt"), "--data", p("data.jsonl"),
                                    "--iters", "4", "--out", p("r1")});
  ASSERT_EQ(serial.code, 0);
  EXPECT_EQ(slurp(p("r/predictions.jsonl")), slurp(p("r1/predictions.jsonl")));

  // Report over the traces.
  const auto rep = run_captured({"report", "--ckpt", p("train/model.ckpt"), "--data", p("data.jsonl"),
                                 "--refined", p("r/predictions.jsonl"), "--traces", p("r/traces"), "--out",
                                 p("rep")});
  ASSERT_EQ(rep.code, 0);
  EXPECT_EQ(line_count(slurp(p("rep/curves.csv"))), 1u + 5u);
  EXPECT_EQ(line_count(slurp(p("rep/comparison.csv"))), 1u + 10u);
  for (const char* f : {"report.json", "error_curve.svg", "joint_uncertainty.svg"})
    EXPECT_TRUE(fs::exists(dir / "rep" / f)) << f;
}

TEST_F(CliTest, JointMismatchExitsFour) {
  prepare_model(4);
  EXPECT_EQ(run_captured({"refine", "--ckpt", p("train/model.ckpt"), "--data", p("data.jsonl"), "--joints", "16",
                          "--out", p("r")})
                .code,
            4);
}

TEST_F(CliTest, GroundTruthAgainstItself) {
  ASSERT_EQ(run({"gen-data", "--n", "6", "--seed", "2", "--out", p("d.jsonl")}), 0);
  const auto r = run_captured({"eval", "--data", p("d.jsonl"), "--refined", p("d.jsonl"), "--out", p("e")});
  ASSERT_EQ(r.code, 0);
  const auto rep = nlohmann::json::parse(slurp(p("e/report.json")));
  EXPECT_EQ(rep["mpjpe_mm"], 0.0);
  EXPECT_EQ(rep["pck_150"], 100.0);
  EXPECT_NE(r.out.find("mpjpe_mm: 0\n"), std::string::npos);
}

TEST_F(CliTest, IoErrorsExitFive) {
  ASSERT_EQ(run({"gen-data", "--n", "2", "--out", p("d.jsonl")}), 0);
  std::ofstream(p("blocker")) << "x";
  EXPECT_EQ(run_captured({"eval", "--data", p("d.jsonl"), "--refined", p("d.jsonl"), "--out", p("blocker/sub")})
                .code,
            5);
  std::ofstream(p("corrupt.ckpt")) << "garbage";
  EXPECT_EQ(run_captured({"eval", "--ckpt", p("corrupt.ckpt"), "--data", p("d.jsonl"), "--out", p("e")}).code, 5);
}

TEST_F(CliTest, RunConfigKeysAppearInSchema) {
  prepare_model(4);
  const auto schema = nlohmann::json::parse(slurp(UAOPOSE_CONFIG_SCHEMA));
  const auto cfg = nlohmann::json::parse(slurp(p("train/run_config.json")));
  const auto& props = schema["properties"];
  for (const auto& [key, value] : cfg.items()) {
    ASSERT_TRUE(props.contains(key)) << key;
    if (value.is_object() && key != "metadata")
      for (const auto& [sub, _] : value.items()) EXPECT_TRUE(props[key]["properties"].contains(sub)) << key << "." << sub;
  }
  // The written file is accepted back as a config.
  EXPECT_EQ(run_captured({"train", "--config", p("train/run_config.json"), "--data", p("data.jsonl"), "--out",
                          p("again")})
                .code,
            0);
  EXPECT_EQ(slurp(p("again/model.ckpt")), slurp(p("train/model.ckpt")));
}
