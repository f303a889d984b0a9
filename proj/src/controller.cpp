#include "cyberv/controller.hpp"

#include <cmath>

namespace cyberv {

namespace {

// 1-based descending rank of every confidence, averaging tied positions.
std::vector<double> average_ranks(const SignalBundle& bundle) {
  const std::size_t n = bundle.responses.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return bundle.responses[a].confidence > bundle.responses[b].confidence;
  });
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && bundle.responses[order[j + 1]].confidence ==
                            bundle.responses[order[i]].confidence)
      ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  return rank;
}

ScoreVector score_with_ranks(const SignalBundle& bundle, std::size_t n,
                             const std::vector<double>& ranks) {
  const auto& r = bundle.responses.at(n);
  ScoreVector v;
  v.response = n;
  v.s = Eigen::VectorXd::Zero(kForestTrees);
  auto set = [&](Tree t, double x) { v.s(static_cast<Eigen::Index>(t)) = std::clamp(x, 0.0, 1.0); };
  set(Tree::Repetition, r.repetition ? 0.0 : 1.0);
  set(Tree::Retention, r.retention);
  if (!r.parsed) return v;

  set(Tree::Confidence, r.confidence);
  if (bundle.base_index) {
    const auto& base = bundle.responses[*bundle.base_index].parsed;
    set(Tree::Stability, base && *base == *r.parsed ? 1.0 : 0.0);
  } else {
    set(Tree::Stability, 1.0);
  }
  const double total = static_cast<double>(bundle.responses.size());
  set(Tree::Rank, total <= 1.0 ? 1.0 : (total - ranks[n]) / (total - 1.0));
  return v;
}

}  // namespace

ScoreVector score_response(const SignalBundle& bundle, std::size_t n) {
  return score_with_ranks(bundle, n, average_ranks(bundle));
}

std::vector<ScoreVector> score_round(const SignalBundle& bundle) {
  const auto ranks = average_ranks(bundle);
  std::vector<ScoreVector> out;
  out.reserve(bundle.responses.size());
  for (std::size_t n = 0; n < bundle.responses.size(); ++n)
    out.push_back(score_with_ranks(bundle, n, ranks));
  return out;
}

Eigen::VectorXd aggregate_round(const std::vector<ScoreVector>& scores, const LoopConfig& cfg) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(scores.size()));
  for (std::size_t n = 0; n < scores.size(); ++n)
    out(static_cast<Eigen::Index>(n)) =
        cfg.scoring == ScoringMode::Majority ? 1.0 : aggregate(scores[n].s, cfg.weights);
  return out;
}

TopScore top_score(std::span<const std::optional<std::string>> answers,
                   const Eigen::Ref<const Eigen::VectorXd>& scores, const ChoiceSet& choices) {
  if (static_cast<Eigen::Index>(answers.size()) != scores.size())
    throw std::invalid_argument("answers and scores differ in length");
  std::vector<double> sums(choices.size(), 0.0);
  std::vector<bool> voted(choices.size(), false);
  for (std::size_t n = 0; n < answers.size(); ++n) {
    if (!answers[n]) continue;
    const auto c = choices.index_of(*answers[n]);
    if (!c) throw std::invalid_argument("answer '" + *answers[n] + "' is not a choice");
    sums[*c] += scores(static_cast<Eigen::Index>(n));
    voted[*c] = true;
  }
  TopScore out;
  for (std::size_t c = 0; c < choices.size(); ++c) {
    if (!voted[c]) continue;
    out.per_option[choices.labels[c]] = sums[c];
    if (!out.label || sums[c] > out.score) {
      out.label = choices.labels[c];
      out.score = sums[c];
    }
  }
  return out;
}

std::int64_t frame_at_time(const VideoTimeline& timeline, double seconds) {
  const auto f = static_cast<std::int64_t>(std::llround(seconds * timeline.fps));
  return std::clamp<std::int64_t>(f, 0, timeline.total_frames - 1);
}

FeedbackAction build_feedback(const DriftSignal& drift, const Task& task, const LoopConfig& cfg,
                              bool dense_sampling) {
  struct Candidate {
    std::int64_t frame;
    double drift;
  };
  std::vector<Candidate> candidates;
  auto add = [&](std::int64_t frame, double d) {
    for (auto& c : candidates) {
      if (c.frame == frame) {
        c.drift = std::min(c.drift, d);
        return;
      }
    }
    candidates.push_back({frame, d});
  };

  const auto& sampled = task.timeline.sampled_indices;
  for (Eigen::Index j : topk_decrease_indices(drift.video, cfg.k_top)) {
    if (j < static_cast<Eigen::Index>(sampled.size()))
      add(sampled[static_cast<std::size_t>(j)], drift.video(j));
  }
  for (Eigen::Index j : topk_decrease_indices(drift.sub, cfg.k_top)) {
    if (j < static_cast<Eigen::Index>(task.subtitles.size()))
      add(frame_at_time(task.timeline, task.subtitles[static_cast<std::size_t>(j)].midpoint_s()),
          drift.sub(j));
  }

  std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    return a.drift < b.drift || (a.drift == b.drift && a.frame < b.frame);
  });
  if (candidates.size() > static_cast<std::size_t>(cfg.max_keyframes))
    candidates.resize(static_cast<std::size_t>(cfg.max_keyframes));

  FeedbackAction action;
  for (const auto& c : candidates) action.keyframes.push_back(c.frame);
  std::sort(action.keyframes.begin(), action.keyframes.end());
  if (dense_sampling && cfg.dense_radius > 0)
    for (auto f : action.keyframes) action.dense_windows.push_back({f, cfg.dense_radius});
  if (!action.empty()) action.note = std::string(kKeyframeNote);
  return action;
}

ControlDecision decide(const TopScore& top, const RoundConfig& round, bool final_round,
                       const SignalBundle& signals, const Task& task, const LoopConfig& cfg) {
  ControlDecision d;
  d.top_label = top.label;
  d.top_score = top.score;
  d.per_option = top.per_option;
  d.threshold = round.tau * static_cast<double>(round.n_paths);
  if (final_round || top.score >= d.threshold - kThresholdSlack) {
    d.verdict = Verdict::Accept;
    return d;
  }
  d.verdict = Verdict::Revise;
  if (round.feedback_enabled && signals.drift)
    d.feedback = build_feedback(*signals.drift, task, cfg, round.dense_sampling);
  else
    d.feedback = FeedbackAction{};
  return d;
}

}  // namespace cyberv
