#pragma once

#include "cyberv/core.hpp"
#include "cyberv/sensor.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <span>
#include <string_view>

namespace cyberv {

// Score forest ---------------------------------------------------------------

enum class Tree { Confidence = 0, Stability, Repetition, Retention, Rank };

inline constexpr std::array<std::string_view, kForestTrees> kTreeNames = {
    "confidence", "stability", "repetition", "attention-retention", "rank"};

struct ScoreVector {
  std::size_t response = 0;
  /// One entry per tree, each in [0,1].
  Eigen::VectorXd s;

  double operator[](Tree t) const { return s(static_cast<Eigen::Index>(t)); }
};

/// Evaluates the five trees for response `n` of a round.
///
/// confidence: answer-token probability. stability: 1 when the parsed answer
/// agrees with the base response (1 when the round has no base response).
/// repetition: 0 when flagged. retention: the sensor's attention retention.
/// rank: (N - rank) / (N - 1) over confidences, average rank on ties, 1 when
/// N = 1. Unparsed responses score (0, 0, repetition, retention, 0).
ScoreVector score_response(const SignalBundle& bundle, std::size_t n);

std::vector<ScoreVector> score_round(const SignalBundle& bundle);

/// Weighted sum of tree scores. Throws std::invalid_argument on a length
/// mismatch or weights that do not sum to 1.
template <typename DerivedS, typename DerivedW>
typename DerivedS::Scalar aggregate(const Eigen::MatrixBase<DerivedS>& s,
                                    const Eigen::MatrixBase<DerivedW>& beta) {
  using Scalar = typename DerivedS::Scalar;
  if (s.size() != beta.size())
    throw std::invalid_argument("score vector has " + std::to_string(s.size()) +
                                " entries but there are " + std::to_string(beta.size()) +
                                " weights");
  if (std::abs(static_cast<double>(beta.sum()) - 1.0) > 1e-9)
    throw std::invalid_argument("weights must sum to 1");
  return s.template cast<Scalar>().dot(beta.template cast<Scalar>());
}

/// S_n for every response in the round. In majority mode every response
/// scores 1; unparsed responses are ignored downstream either way.
Eigen::VectorXd aggregate_round(const std::vector<ScoreVector>& scores, const LoopConfig& cfg);

struct TopScore {
  /// Empty when no response named an option.
  std::optional<std::string> label;
  double score = 0.0;
  /// Summed S_n per option that received at least one vote.
  std::map<std::string, double> per_option;
};

/// max over options of the summed S_n of responses predicting that option.
/// Ties go to the option listed first in the choice set.
TopScore top_score(std::span<const std::optional<std::string>> answers,
                   const Eigen::Ref<const Eigen::VectorXd>& scores, const ChoiceSet& choices);

// Feedback ---------------------------------------------------------------------

struct DenseWindow {
  std::int64_t center = 0;
  std::int64_t radius = 0;

  bool operator==(const DenseWindow&) const = default;
};

/// Declared for backends that can zoom; never populated by build_feedback.
struct ZoomRegion {
  double x = 0, y = 0, width = 1, height = 1;

  bool operator==(const ZoomRegion&) const = default;
};

struct FeedbackAction {
  /// Sorted native frame indices to re-insert at their chronological positions.
  std::vector<std::int64_t> keyframes;
  std::vector<DenseWindow> dense_windows;
  std::string note;
  std::optional<ZoomRegion> zoom;

  bool empty() const { return keyframes.empty() && dense_windows.empty() && !zoom; }
  bool operator==(const FeedbackAction&) const = default;
};

inline constexpr std::string_view kKeyframeNote =
    "Note: key frames relevant to the question have been re-inserted into the video at their "
    "original positions.";

/// Indices of at most k strictly negative components, most negative first.
/// Exact ties keep the lower index first.
template <typename Derived>
std::vector<Eigen::Index> topk_decrease_indices(const Eigen::DenseBase<Derived>& delta, int k) {
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = 0; i < delta.size(); ++i)
    if (delta(i) < 0) idx.push_back(i);
  const auto keep = std::min<std::size_t>(idx.size(), static_cast<std::size_t>(std::max(k, 0)));
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep), idx.end(),
                    [&](Eigen::Index a, Eigen::Index b) {
                      return delta(a) < delta(b) || (delta(a) == delta(b) && a < b);
                    });
  idx.resize(keep);
  return idx;
}

/// Native frame nearest to `seconds`, clamped to the timeline.
std::int64_t frame_at_time(const VideoTimeline& timeline, double seconds);

/// Key frames from the most-decreased video segments (mapped through the
/// sampled indices) and subtitle segments (traced to their midpoint frame).
/// The union is capped at cfg.max_keyframes keeping the most negative drift.
FeedbackAction build_feedback(const DriftSignal& drift, const Task& task, const LoopConfig& cfg,
                              bool dense_sampling);

// Decision -------------------------------------------------------------------

enum class Verdict { Accept, Revise };

struct ControlDecision {
  Verdict verdict = Verdict::Accept;
  std::optional<std::string> top_label;
  double top_score = 0.0;
  double threshold = 0.0;
  std::map<std::string, double> per_option;
  /// Present iff verdict is Revise.
  std::optional<FeedbackAction> feedback;

  bool accepted() const { return verdict == Verdict::Accept; }
};

/// Absorbs summation round-off when comparing TopScore against tau * N.
inline constexpr double kThresholdSlack = 1e-9;

/// Accept when TopScore >= tau * N (or on the final round); otherwise Revise
/// with feedback built from the round's drift signal.
ControlDecision decide(const TopScore& top, const RoundConfig& round, bool final_round,
                       const SignalBundle& signals, const Task& task, const LoopConfig& cfg);

}  // namespace cyberv
