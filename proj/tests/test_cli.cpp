#include "cyberv/harness.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

namespace cyberv {
namespace {

namespace fs = std::filesystem;

struct Cli : ::testing::Test {
  fs::path work = fs::temp_directory_path() / ("cyberv_cli_" + std::to_string(::getpid()));

  void SetUp() override { fs::create_directories(work); }
  void TearDown() override { fs::remove_all(work); }

  int cli(const std::string& args) {
    const std::string cmd = std::string(CYBERV_CLI) + " " + args + " > " + (work / "stdout").string() +
                            " 2> " + (work / "stderr").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  std::string read(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }
};

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

TEST_F(Cli, InspectPointsAtTheScriptedDriftSegment) {
  const auto data = testing::data_dir() / "correction/dataset.jsonl";
  ASSERT_EQ(cli("run --dataset " + data.string() + " --task t1 --out " + (work / "t1.json").string()), 0);
  ASSERT_EQ(cli("inspect --trace " + (work / "t1.json").string() + " --out " +
                (work / "scores.csv").string()),
            0);

  std::istringstream drift(read(work / "scores_drift.csv"));
  std::string header, row;
  std::getline(drift, header);
  std::getline(drift, row);
  const auto cols = split(header);
  const auto vals = split(row);
  ASSERT_EQ(cols.size(), vals.size());
  std::size_t most_negative = 1;
  for (std::size_t i = 1; i < vals.size(); ++i)
    if (std::stod(vals[i]) < std::stod(vals[most_negative])) most_negative = i;
  EXPECT_EQ(cols[most_negative], "video_12");

  const auto scores = read(work / "scores.csv");
  EXPECT_TRUE(scores.starts_with(
      "round,strategy_id,parsed,confidence,stability,repetition,attention-retention,rank,aggregate\n"));
  EXPECT_EQ(std::count(scores.begin(), scores.end(), '\n'), 1 + 8 + 1);
}

TEST_F(Cli, InspectWithoutAttentionWarnsAndEmitsScores) {
  const nlohmann::json scenario = nlohmann::json::parse(R"({"entries":[
    {"task_id":"t","strategy_id":"base",
     "reply":{"text":"Answer: A","answer_logprobs":{"A":-0.01},"attention":null,"token_count":2}}]})");
  Task task = testing::simple_task("t", 4);
  const LoopConfig cfg = load_config(R"({"rounds":[{"n":1,"tau":0}]})");
  const auto trace = run(task, cfg, MockBackend(MockScenario(scenario)));
  std::ofstream(work / "trace.json") << to_json(trace).dump();

  ASSERT_EQ(cli("inspect --trace " + (work / "trace.json").string() + " --out " +
                (work / "scores.csv").string()),
            0);
  EXPECT_NE(read(work / "stderr").find("warning"), std::string::npos);
  EXPECT_TRUE(fs::exists(work / "scores.csv"));
  EXPECT_FALSE(fs::exists(work / "scores_drift.csv"));
}

TEST_F(Cli, OverridesAreValidatedBeforeExecution) {
  const auto data = (testing::data_dir() / "correction/dataset.jsonl").string();
  // A missing scenario would fail at execution; validation must fail first.
  EXPECT_EQ(cli("run --dataset " + data + " --task t1 --scenario /nonexistent --k-top 0"), 1);
  EXPECT_NE(read(work / "stderr").find("k_top"), std::string::npos);
  EXPECT_EQ(cli("run --dataset " + data + " --task t1 --scoring plurality"), 1);
  EXPECT_EQ(cli("run --dataset " + data + " --task t1 --n 0"), 1);
  EXPECT_EQ(cli("run --dataset " + data + " --task t1 --weights 0.2,0.2,0.2,0.4"), 1);
}

TEST_F(Cli, FlagsOverrideTheConfigFile) {
  const auto data = (testing::data_dir() / "eval10/dataset.jsonl").string();
  const auto two_path = (testing::data_dir() / "configs/two_path.json").string();
  ASSERT_EQ(cli("run --dataset " + data + " --task e01 --config " + two_path + " --out " +
                (work / "a.json").string()),
            0);
  const auto a = nlohmann::json::parse(read(work / "a.json"));
  EXPECT_EQ(a.at("rounds").at(0).at("responses").size(), 2u);
  EXPECT_EQ(a.at("rounds").at(0).at("decision").at("threshold"), 1.0);

  ASSERT_EQ(cli("run --dataset " + data + " --task e01 --config " + two_path + " --tau 0.25 --out " +
                (work / "b.json").string()),
            0);
  const auto b = nlohmann::json::parse(read(work / "b.json"));
  EXPECT_EQ(b.at("rounds").at(0).at("decision").at("threshold"), 0.5);
}

}  // namespace
}  // namespace cyberv
