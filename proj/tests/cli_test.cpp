#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

namespace {

using nlohmann::json;

std::string cli_path() {
  const char* env = std::getenv("CLUSTMIX_CLI_BIN");
  return env ? env : "";
}

struct RunResult {
  int exit_code;
  std::string stdout_text;
};

RunResult run_cli(const std::string& args) {
  const std::string out_file =
      (std::filesystem::temp_directory_path() / "clustmix_cli_stdout.txt").string();
  const std::string cmd = "\"" + cli_path() + "\" " + args + " > " + out_file + " 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream in(out_file);
  std::stringstream ss;
  ss << in.rdbuf();
  std::remove(out_file.c_str());
  return {WEXITSTATUS(status), ss.str()};
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    ASSERT_FALSE(cli_path().empty()) << "CLUSTMIX_CLI_BIN not set";
    dir_ = (std::filesystem::temp_directory_path() / "clustmix_cli_test").string();
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }

  std::string path(const std::string& name) const { return dir_ + "/" + name; }

  std::string dir_;
};

TEST_F(CliTest, CalibrateRoundTripsBetweenSigmaAndL) {
  const auto sigma_run = run_cli(
      "calibrate --epsilon 1 --delta 1e-5 --l 100 --classes 1 --features 2 --json");
  ASSERT_EQ(sigma_run.exit_code, 0) << sigma_run.stdout_text;
  const json sigma_json = json::parse(sigma_run.stdout_text);
  for (const char* key : {"sigma_min", "epsilon", "delta", "C", "D"}) {
    EXPECT_TRUE(sigma_json.contains(key)) << key;
  }
  const double sigma = sigma_json["sigma_min"];

  std::ostringstream cmd;
  cmd << "calibrate --epsilon 1 --delta 1e-5 --sigma-max " << sigma
      << " --classes 1 --features 2 --json";
  const auto l_run = run_cli(cmd.str());
  ASSERT_EQ(l_run.exit_code, 0) << l_run.stdout_text;
  const json l_json = json::parse(l_run.stdout_text);
  EXPECT_TRUE(l_json.contains("l_min"));
  EXPECT_EQ(l_json["l_min"].get<long long>(), 100);
}

TEST_F(CliTest, CalibrateValidatesFlags) {
  EXPECT_EQ(run_cli("calibrate --epsilon -1 --delta 1e-5 --l 10").exit_code, 2);
  EXPECT_EQ(run_cli("calibrate --epsilon 1 --delta 2 --l 10").exit_code, 2);
  EXPECT_EQ(run_cli("calibrate --epsilon 1 --delta 1e-5").exit_code, 2);
  EXPECT_EQ(
      run_cli("calibrate --epsilon 1 --delta 1e-5 --l 5 --sigma-max 0.5").exit_code,
      2);
}

TEST_F(CliTest, ToyAndSynthesizeAreDeterministic) {
  const std::string data = path("toy.csv");
  ASSERT_EQ(run_cli("toy --kind blobs --n 200 --seed 3 --output " + data).exit_code, 0);

  const std::string cfg = path("cfg.json");
  {
    std::ofstream out(cfg);
    out << R"({"privacy": {"epsilon": 5.0}, "n_slices": 2, )"
        << R"("sigma_max_grid": [0.1, 0.3], "seed": 7})";
  }
  // Identical invocations (same output paths) must be byte-identical; the
  // first run's artifacts are copied aside before the overwrite.
  const std::string args = "synthesize --input " + data + " --config " + cfg +
                           " --label-column label --output " + path("out.csv") +
                           " --report " + path("out.json");
  ASSERT_EQ(run_cli(args).exit_code, 0);
  const std::string first_csv = read_file(path("out.csv"));
  const std::string first_json = read_file(path("out.json"));
  ASSERT_EQ(run_cli(args).exit_code, 0);
  EXPECT_EQ(first_csv, read_file(path("out.csv")));
  EXPECT_EQ(first_json, read_file(path("out.json")));

  // Schema equality with the input, and report fields present.
  std::ifstream synth(path("out.csv"));
  std::string header;
  std::getline(synth, header);
  std::ifstream orig(data);
  std::string orig_header;
  std::getline(orig, orig_header);
  EXPECT_EQ(header, orig_header);

  const json report = json::parse(first_json);
  EXPECT_TRUE(report["synthesis"].contains("realized_privacy"));
  EXPECT_GT(report["synthesis"]["realized_privacy"]["records"].size(), 0u);
  EXPECT_TRUE(report["manifest"]["inputs"][0].contains("fnv1a64"));
}

TEST_F(CliTest, EvaluateIdenticalSetsReportZeroGap) {
  const std::string data = path("toy.csv");
  ASSERT_EQ(run_cli("toy --kind moons --n 120 --seed 4 --output " + data).exit_code, 0);
  const auto result = run_cli("evaluate --train " + data + " --test " + data +
                              " --synthetic " + data + " --metric accuracy");
  ASSERT_EQ(result.exit_code, 0) << result.stdout_text;
  EXPECT_NE(result.stdout_text.find("gap=0"), std::string::npos) << result.stdout_text;
}

TEST_F(CliTest, EvaluateNamesMissingColumn) {
  const std::string train = path("train.csv");
  const std::string broken = path("broken.csv");
  ASSERT_EQ(run_cli("toy --kind blobs --n 40 --seed 5 --output " + train).exit_code, 0);
  {
    std::ofstream out(broken);
    out << "x0,wrong,label\n0.5,0.5,0\n0.6,0.4,1\n";
  }
  const auto result = run_cli("evaluate --train " + train + " --test " + train +
                              " --synthetic " + broken);
  EXPECT_EQ(result.exit_code, 3);
  EXPECT_NE(result.stdout_text.find("wrong"), std::string::npos) << result.stdout_text;
}

TEST_F(CliTest, MissingInputFileIsADataError) {
  const auto result = run_cli("synthesize --input " + path("absent.csv") +
                              " --output " + path("out.csv"));
  EXPECT_EQ(result.exit_code, 3);
}

TEST_F(CliTest, InfeasibleCalibrationExitsWithDedicatedCode) {
  // Huge mixture demanded (tiny delta, tiny sigma ceiling) on a tiny file.
  const std::string data = path("tiny.csv");
  ASSERT_EQ(run_cli("toy --kind blobs --n 8 --seed 6 --output " + data).exit_code, 0);
  const std::string cfg = path("cfg.json");
  {
    std::ofstream out(cfg);
    out << R"({"privacy": {"epsilon": 0.1, "delta": 1e-9}, )"
        << R"("sigma_max_grid": [0.01]})";
  }
  const auto result = run_cli("synthesize --input " + data + " --config " + cfg +
                              " --output " + path("out.csv"));
  EXPECT_EQ(result.exit_code, 4) << result.stdout_text;
}

TEST_F(CliTest, UnknownConfigKeyIsAConfigError) {
  const std::string data = path("toy.csv");
  ASSERT_EQ(run_cli("toy --kind blobs --n 40 --seed 8 --output " + data).exit_code, 0);
  const std::string cfg = path("bad.json");
  {
    std::ofstream out(cfg);
    out << R"({"sigma_grid": [0.1]})";
  }
  const auto result = run_cli("synthesize --input " + data + " --config " + cfg +
                              " --output " + path("out.csv"));
  EXPECT_EQ(result.exit_code, 2);
}

TEST_F(CliTest, PipelineWithBaselineEmitsMatchedPrivacyFields) {
  const std::string data = path("toy.csv");
  ASSERT_EQ(run_cli("toy --kind moons --n 240 --seed 9 --output " + data).exit_code, 0);
  const std::string cfg = path("cfg.json");
  {
    std::ofstream out(cfg);
    out << R"({"privacy": {"epsilon": 2.0}, "n_slices": 2, )"
        << R"("sigma_max_grid": [0.1, 0.5]})";
  }
  const std::string report_path = path("report.json");
  const auto result =
      run_cli("pipeline --input " + data + " --config " + cfg +
              " --seed 1 --metric auc --baseline --report " + report_path);
  ASSERT_EQ(result.exit_code, 0) << result.stdout_text;
  const json report = json::parse(read_file(report_path));
  ASSERT_EQ(report["runs"].size(), 1u);
  const auto& run = report["runs"][0];
  EXPECT_TRUE(run.contains("clustmix"));
  EXPECT_TRUE(run.contains("baseline"));
  EXPECT_EQ(run["clustmix"]["epsilon"], run["baseline"]["epsilon"]);
  EXPECT_EQ(run["clustmix"]["delta"], run["baseline"]["delta"]);
  EXPECT_TRUE(report["summary"].contains("mean_baseline_score"));
}

}  // namespace
