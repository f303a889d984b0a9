#pragma once

#include "cyberv/core.hpp"

#include <string_view>

namespace cyberv {

/// Per-segment mean-over-heads attention difference, CoT minus base.
template <typename Scalar>
struct BasicDriftSignal {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Vector video;
  /// Empty when the task has no subtitles.
  Vector sub;
  std::string base_strategy_id;
  std::string cot_strategy_id;
};

using DriftSignal = BasicDriftSignal<double>;

/// Mean over heads of (cot - base), per segment. Both profiles must share
/// H, K1 and K2; throws ValidationError otherwise.
template <typename Scalar>
BasicDriftSignal<Scalar> compute_attention_drift(const BasicAttentionProfile<Scalar>& base,
                                                 const BasicAttentionProfile<Scalar>& cot) {
  if (base.heads() < 1 || base.heads() != cot.heads() || base.k1() != cot.k1() ||
      base.k2() != cot.k2() || base.sub.rows() != cot.sub.rows())
    throw ValidationError("attention drift needs profiles of identical shape");
  BasicDriftSignal<Scalar> d;
  d.video = (cot.video - base.video).colwise().mean().transpose();
  if (base.k2() > 0)
    d.sub = (cot.sub - base.sub).colwise().mean().transpose();
  else
    d.sub.resize(0);
  return d;
}

/// Identifies the single choice a free-form response commits to. Tried in
/// order: an explicit answer pattern (last occurrence wins), a trailing
/// standalone label, unique containment of one choice's full text.
std::optional<std::string> parse_prediction(std::string_view text, const ChoiceSet& choices);

struct RepetitionRule {
  int ngram = 10;
  int min_count = 3;
};

/// True iff some whitespace-token n-gram of length `rule.ngram` occurs at
/// least `rule.min_count` times (overlapping occurrences count).
bool detect_repetition(std::string_view text, RepetitionRule rule = {});

/// exp(logprob) of the parsed label, or 0 when unparsed or unavailable.
double extract_confidence(const ResponseRecord& r);

struct ResponseSignals {
  std::optional<std::string> parsed;
  double confidence = 0.0;
  bool repetition = false;
  double retention = 1.0;
  bool has_attention = false;
};

struct SignalBundle {
  std::vector<ResponseSignals> responses;
  /// Index of the base response, if the round had one.
  std::optional<std::size_t> base_index;
  /// Drift between the base and the most confident attention-bearing CoT.
  std::optional<DriftSignal> drift;
};

/// Sensor pass over one round. At most one base response is allowed.
SignalBundle collect_signals(const std::vector<ResponseRecord>& responses,
                             RepetitionRule rule = {});

}  // namespace cyberv
