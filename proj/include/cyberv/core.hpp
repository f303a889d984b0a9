#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cyberv {

// Errors ---------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value violates a documented domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A configuration document does not satisfy the config schema.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A backend reply does not satisfy the wire protocol.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// The mock backend has no scripted entry for a request.
class ScenarioError : public Error {
 public:
  using Error::Error;
};

/// The backend could not be reached or timed out. Degraded, not fatal.
class BackendUnavailable : public Error {
 public:
  using Error::Error;
};

// Task description -----------------------------------------------------------

struct ChoiceSet {
  std::vector<std::string> labels;
  /// Either empty or one entry per label.
  std::vector<std::string> texts;

  std::optional<std::size_t> index_of(const std::string& label) const;
  bool contains(const std::string& label) const { return index_of(label).has_value(); }
  std::size_t size() const { return labels.size(); }
  bool has_texts() const { return !texts.empty(); }
};

struct SubtitleSegment {
  int index = 0;
  double start_s = 0.0;
  double end_s = 0.0;
  std::string text;

  double midpoint_s() const { return 0.5 * (start_s + end_s); }
};

struct VideoTimeline {
  double duration_s = 0.0;
  std::int64_t total_frames = 0;
  double fps = 0.0;
  /// Native frame indices currently fed to the model; one video segment each.
  std::vector<std::int64_t> sampled_indices;

  int k1() const { return static_cast<int>(sampled_indices.size()); }
};

struct Task {
  std::string id;
  std::string question;
  ChoiceSet choices;
  std::vector<SubtitleSegment> subtitles;
  VideoTimeline timeline;
  std::optional<std::string> ground_truth;
  std::string media_ref;
  /// Key a scripted backend uses instead of the id, when set.
  std::optional<std::string> scenario_key;

  int k2() const { return static_cast<int>(subtitles.size()); }
};

// Strategies and responses ---------------------------------------------------

enum class StrategyKind { Base, CoT, CoTWithKeyFrames };

std::string to_string(StrategyKind kind);
StrategyKind strategy_kind_from_string(const std::string& s);

struct SamplingParams {
  double temperature = 0.0;
  double top_p = 1.0;
  int top_k = 0;
  std::uint64_t seed = 0;

  bool operator==(const SamplingParams&) const = default;
};

struct Strategy {
  std::string id;
  StrategyKind kind = StrategyKind::Base;
  SamplingParams sampling;
  std::string prompt_prefix;

  bool is_cot() const { return kind != StrategyKind::Base; }
  bool operator==(const Strategy&) const = default;
};

/// Answer-token attention mass over segments: rows are heads, columns segments.
/// Sub-slices of the full attention row; never renormalized.
template <typename Scalar>
struct BasicAttentionProfile {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  Matrix video;
  Matrix sub;

  Eigen::Index heads() const { return video.rows(); }
  Eigen::Index k1() const { return video.cols(); }
  Eigen::Index k2() const { return sub.cols(); }

  /// Mean over heads of the total attention on video segments.
  Scalar mean_video_mass() const {
    return heads() == 0 ? Scalar(0) : video.sum() / static_cast<Scalar>(heads());
  }
};

using AttentionProfile = BasicAttentionProfile<double>;

/// Tolerance on per-head segment mass.
inline constexpr double kMassTolerance = 1e-6;

/// Throws ValidationError unless `p` is H x k1 / H x k2 with entries in [0,1]
/// and per-head mass at most 1.
void validate_profile(const AttentionProfile& p, Eigen::Index k1, Eigen::Index k2);

struct ResponseRecord {
  std::string strategy_id;
  StrategyKind kind = StrategyKind::Base;
  std::string text;
  std::optional<std::string> parsed;
  /// Label -> log-probability at the answer position. May be partial.
  std::map<std::string, double> answer_token_logprobs;
  std::optional<AttentionProfile> attention;
  int token_count = 0;
  /// Set when the backend call failed and this record is a placeholder.
  std::optional<std::string> error;

  bool is_cot() const { return kind != StrategyKind::Base; }
};

// Configuration ----------------------------------------------------------------

struct RoundConfig {
  int n_paths = 1;
  double tau = 0.0;
  std::vector<Strategy> strategies;
  bool feedback_enabled = true;
  /// Attach dense resampling windows to the feedback this round builds.
  bool dense_sampling = false;
};

enum class ScoringMode {
  ScoreForest,
  /// Every parsed response scores 1: plain plurality voting.
  Majority,
};

/// Number of trees in the score forest.
inline constexpr int kForestTrees = 5;

struct LoopConfig {
  std::vector<RoundConfig> rounds;
  Eigen::VectorXd weights;
  int k_top = 5;
  int max_keyframes = 20;
  int dense_radius = 0;
  std::string tie_break = "choice-order";
  int parallelism = 8;
  ScoringMode scoring = ScoringMode::ScoreForest;
};

void validate(const ChoiceSet& choices);
void validate(const VideoTimeline& timeline);
void validate(const Task& task);
void validate(const RoundConfig& round, bool first_round, bool final_round);
void validate(const LoopConfig& cfg);

}  // namespace cyberv
