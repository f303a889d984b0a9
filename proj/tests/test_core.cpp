#include "cyberv/config.hpp"
#include "cyberv/core.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <random>

namespace cyberv {
namespace {

using testing::profile;

TEST(LoadConfig, EmptyDocumentGivesDefaultSchedule) {
  const LoopConfig cfg = load_config("{}");
  ASSERT_EQ(cfg.rounds.size(), 2u);
  EXPECT_EQ(cfg.rounds[0].n_paths, 8);
  EXPECT_DOUBLE_EQ(cfg.rounds[0].tau, 0.3);
  EXPECT_EQ(cfg.rounds[1].n_paths, 1);
  EXPECT_EQ(cfg.rounds[1].tau, 0.0);
  ASSERT_EQ(cfg.weights.size(), 5);
  for (Eigen::Index i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(cfg.weights(i), 0.2);
  EXPECT_EQ(cfg.k_top, 5);
  EXPECT_EQ(cfg.max_keyframes, 20);
  EXPECT_EQ(cfg.tie_break, "choice-order");
  EXPECT_EQ(cfg.scoring, ScoringMode::ScoreForest);
}

TEST(LoadConfig, DefaultFirstRoundIsOneBaseAndSevenCotVariants) {
  const LoopConfig cfg = default_config();
  const auto& s = cfg.rounds[0].strategies;
  ASSERT_EQ(s.size(), 8u);
  EXPECT_EQ(s[0].kind, StrategyKind::Base);
  EXPECT_EQ(s[0].sampling.temperature, 0.0);
  EXPECT_TRUE(s[0].prompt_prefix.empty());
  for (std::size_t i = 1; i < s.size(); ++i) {
    EXPECT_EQ(s[i].kind, StrategyKind::CoT);
    EXPECT_EQ(s[i].sampling.temperature, 1.0);
    EXPECT_EQ(s[i].sampling.top_p, 0.5);
    EXPECT_EQ(s[i].sampling.top_k, 5);
    EXPECT_EQ(s[i].prompt_prefix, "Thinking Process:");
  }
  EXPECT_EQ(cfg.rounds[1].strategies[0].kind, StrategyKind::CoTWithKeyFrames);
}

TEST(LoadConfig, WeightsMustSumToOne) {
  EXPECT_THROW(load_config(R"({"weights":[0.5,0.5,0.1,0,0]})"), ConfigError);
  EXPECT_NO_THROW(load_config(R"({"weights":[0.5,0.5,0,0,0]})"));
}

TEST(LoadConfig, TwoPathScheduleIsValid) {
  const LoopConfig cfg = load_config(R"({"rounds":[{"n":2,"tau":0.5},{"n":1,"tau":0}]})");
  ASSERT_EQ(cfg.rounds.size(), 2u);
  EXPECT_EQ(cfg.rounds[0].n_paths, 2);
  EXPECT_EQ(cfg.rounds[0].tau, 0.5);
  EXPECT_EQ(cfg.rounds[0].strategies[1].id, "cot-0");
}

TEST(LoadConfig, RejectsSchemaViolations) {
  EXPECT_THROW(load_config("[1,2]"), ConfigError);
  EXPECT_THROW(load_config("{not json"), ConfigError);
  EXPECT_THROW(load_config(R"({"k_top":"five"})"), ConfigError);
  EXPECT_THROW(load_config(R"({"k_top":0})"), ConfigError);
  EXPECT_THROW(load_config(R"({"max_keyframes":0})"), ConfigError);
  EXPECT_THROW(load_config(R"({"tie_break":"random"})"), ConfigError);
  EXPECT_THROW(load_config(R"({"unknown":1})"), ConfigError);
  EXPECT_THROW(load_config(R"({"weights":[0.25,0.25,0.25,0.25]})"), ConfigError);
  EXPECT_THROW(load_config(R"({"weights":[1.2,-0.2,0,0,0]})"), ConfigError);
}

TEST(LoadConfig, FinalRoundMustForceTermination) {
  EXPECT_THROW(load_config(R"({"rounds":[{"n":8,"tau":0.3},{"n":1,"tau":0.2}]})"), ConfigError);
  EXPECT_THROW(load_config(R"({"rounds":[{"n":8,"tau":0.3}]})"), ConfigError);
  EXPECT_NO_THROW(load_config(R"({"rounds":[{"n":8,"tau":0}]})"));
}

TEST(LoadConfig, FirstRoundNeedsExactlyOneBase) {
  EXPECT_THROW(load_config(R"({"rounds":[{"strategies":[{"id":"c","kind":"cot"}],"tau":0}]})"),
               ConfigError);
  EXPECT_THROW(load_config(R"({"rounds":[{"tau":0,"strategies":[
      {"id":"b","kind":"base"},{"id":"b2","kind":"base"}]}]})"),
               ConfigError);
  EXPECT_THROW(load_config(R"({"rounds":[{"tau":0,"strategies":[
      {"id":"b","kind":"base","temperature":0.7}]}]})"),
               ConfigError);
  EXPECT_THROW(load_config(R"({"rounds":[{"n":3,"tau":0,"strategies":[{"id":"b","kind":"base"}]}]})"),
               ConfigError);
}

// Property: serialize(load(d)) reloads to an equal config for generated documents.
TEST(LoadConfig, RoundTripsGeneratedConfigs) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> rounds_d(1, 3), n_d(1, 9), k_d(1, 10);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    nlohmann::json doc;
    const int rounds = rounds_d(rng);
    for (int r = 0; r < rounds; ++r) {
      nlohmann::json round{{"n", n_d(rng)}, {"tau", r + 1 == rounds ? 0.0 : u(rng)}};
      if (u(rng) < 0.3) round["dense_sampling"] = true;
      if (u(rng) < 0.2) round["feedback"] = false;
      doc["rounds"].push_back(round);
    }
    std::vector<double> w(5);
    double total = 0;
    for (auto& x : w) total += (x = u(rng));
    for (auto& x : w) x /= total;
    w[4] = 1.0 - (w[0] + w[1] + w[2] + w[3]);
    doc["weights"] = w;
    doc["k_top"] = k_d(rng);
    doc["max_keyframes"] = k_d(rng) * 3;
    doc["parallelism"] = k_d(rng);
    doc["dense_radius"] = k_d(rng);
    if (u(rng) < 0.5) doc["scoring"] = "majority";

    const LoopConfig cfg = load_config(doc.dump());
    const LoopConfig again = load_config(to_json(cfg).dump());
    EXPECT_TRUE(cfg == again) << doc.dump();
  }
}

TEST(ValidateProfile, AcceptsMassBelowOne) {
  EXPECT_NO_THROW(validate_profile(profile({{0.6, 0.3}}, {{0.05}}), 2, 1));
}

TEST(ValidateProfile, RejectsExcessMass) {
  AttentionProfile p = profile({{0.8, 0.5}});
  p.sub.resize(1, 0);
  EXPECT_THROW(validate_profile(p, 2, 0), ValidationError);
}

TEST(ValidateProfile, RejectsShapeMismatch) {
  AttentionProfile p = profile({{0.1, 0.1, 0.1}, {0.1, 0.1, 0.1}});
  p.sub.resize(2, 0);
  EXPECT_THROW(validate_profile(p, 4, 0), ValidationError);
  EXPECT_NO_THROW(validate_profile(p, 3, 0));
}

TEST(ValidateProfile, RejectsNegativeEntries) {
  AttentionProfile p = profile({{-0.1, 0.5}});
  p.sub.resize(1, 0);
  EXPECT_THROW(validate_profile(p, 2, 0), ValidationError);
}

TEST(ValidateProfile, ToleratesRoundOffAtFullMass) {
  AttentionProfile p = profile({{0.5, 0.5 + 5e-7}});
  p.sub.resize(1, 0);
  EXPECT_NO_THROW(validate_profile(p, 2, 0));
}

TEST(ValidateTask, GroundTruthMustBeAChoice) {
  Task t = testing::simple_task("t", 4);
  EXPECT_NO_THROW(validate(t));
  t.ground_truth = "E";
  EXPECT_THROW(validate(t), ValidationError);
}

TEST(ValidateTask, TimelineMustBeStrictlyIncreasingAndInRange) {
  Task t = testing::simple_task("t", 4);
  t.timeline.sampled_indices = {0, 30, 30, 90};
  EXPECT_THROW(validate(t), ValidationError);
  t.timeline.sampled_indices = {0, 30, 60, 120};
  EXPECT_THROW(validate(t), ValidationError);
}

TEST(ValidateChoices, LabelsAreUniqueAndNonEmpty) {
  EXPECT_THROW(validate(ChoiceSet{{}, {}}), ValidationError);
  EXPECT_THROW(validate(ChoiceSet{{"A", "A"}, {}}), ValidationError);
  EXPECT_THROW(validate(ChoiceSet{{"A", "B"}, {"x"}}), ValidationError);
}

}  // namespace
}  // namespace cyberv
