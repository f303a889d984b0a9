#include "cyberv/core.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace cyberv {

std::optional<std::size_t> ChoiceSet::index_of(const std::string& label) const {
  auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) return std::nullopt;
  return static_cast<std::size_t>(it - labels.begin());
}

std::string to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::Base: return "base";
    case StrategyKind::CoT: return "cot";
    case StrategyKind::CoTWithKeyFrames: return "cot-keyframes";
  }
  return "base";
}

StrategyKind strategy_kind_from_string(const std::string& s) {
  if (s == "base") return StrategyKind::Base;
  if (s == "cot") return StrategyKind::CoT;
  if (s == "cot-keyframes") return StrategyKind::CoTWithKeyFrames;
  throw ValidationError("unknown strategy kind '" + s + "'");
}

void validate_profile(const AttentionProfile& p, Eigen::Index k1, Eigen::Index k2) {
  const Eigen::Index h = p.video.rows();
  if (h < 1) throw ValidationError("attention profile needs at least one head");
  if (p.video.cols() != k1 || p.sub.rows() != h || p.sub.cols() != k2) {
    std::ostringstream os;
    os << "attention shape mismatch: video " << p.video.rows() << "x" << p.video.cols()
       << ", sub " << p.sub.rows() << "x" << p.sub.cols() << ", expected " << h << "x" << k1
       << " and " << h << "x" << k2;
    throw ValidationError(os.str());
  }
  if (!p.video.allFinite() || !p.sub.allFinite())
    throw ValidationError("attention entries must be finite");
  if ((p.video.array() < 0.0).any() || (p.sub.array() < 0.0).any())
    throw ValidationError("attention entries must be non-negative");
  if ((p.video.array() > 1.0).any() || (p.sub.array() > 1.0).any())
    throw ValidationError("attention entries must be at most 1");
  Eigen::VectorXd mass = p.video.rowwise().sum();
  if (k2 > 0) mass += p.sub.rowwise().sum();
  for (Eigen::Index i = 0; i < h; ++i) {
    if (mass(i) > 1.0 + kMassTolerance) {
      std::ostringstream os;
      os << "attention mass of head " << i << " is " << mass(i) << " > 1";
      throw ValidationError(os.str());
    }
  }
}

void validate(const ChoiceSet& choices) {
  if (choices.labels.empty()) throw ValidationError("choice set is empty");
  std::set<std::string> seen;
  for (const auto& l : choices.labels) {
    if (l.empty()) throw ValidationError("empty choice label");
    if (!seen.insert(l).second) throw ValidationError("duplicate choice label '" + l + "'");
  }
  if (!choices.texts.empty() && choices.texts.size() != choices.labels.size())
    throw ValidationError("choice texts must match labels one to one");
}

void validate(const VideoTimeline& timeline) {
  if (timeline.total_frames < 1) throw ValidationError("timeline has no frames");
  if (!(timeline.fps > 0.0)) throw ValidationError("timeline fps must be positive");
  for (std::size_t i = 0; i < timeline.sampled_indices.size(); ++i) {
    const auto idx = timeline.sampled_indices[i];
    if (idx < 0 || idx >= timeline.total_frames)
      throw ValidationError("sampled frame " + std::to_string(idx) + " out of range");
    if (i > 0 && idx <= timeline.sampled_indices[i - 1])
      throw ValidationError("sampled frame indices must be strictly increasing");
  }
}

void validate(const Task& task) {
  validate(task.choices);
  validate(task.timeline);
  if (task.ground_truth && !task.choices.contains(*task.ground_truth))
    throw ValidationError("ground truth '" + *task.ground_truth + "' is not a choice");
  for (std::size_t i = 0; i < task.subtitles.size(); ++i) {
    const auto& s = task.subtitles[i];
    if (s.index != static_cast<int>(i))
      throw ValidationError("subtitle indices must be contiguous from 0");
    if (!(s.start_s >= 0.0) || !(s.start_s < s.end_s))
      throw ValidationError("subtitle " + std::to_string(i) + " needs 0 <= start < end");
    if (i > 0 && s.start_s < task.subtitles[i - 1].start_s)
      throw ValidationError("subtitles must be sorted by start time");
  }
}

void validate(const RoundConfig& round, bool first_round, bool final_round) {
  if (round.n_paths < 1) throw ConfigError("round needs n >= 1");
  if (!(round.tau >= 0.0 && round.tau <= 1.0)) throw ConfigError("tau must lie in [0,1]");
  if (final_round && round.tau != 0.0) throw ConfigError("final round must have tau = 0");
  if (static_cast<int>(round.strategies.size()) != round.n_paths)
    throw ConfigError("round lists " + std::to_string(round.strategies.size()) +
                      " strategies but n = " + std::to_string(round.n_paths));
  std::set<std::string> ids;
  int bases = 0;
  for (const auto& s : round.strategies) {
    if (s.id.empty()) throw ConfigError("strategy id is empty");
    if (!ids.insert(s.id).second) throw ConfigError("duplicate strategy id '" + s.id + "'");
    if (s.kind == StrategyKind::Base) {
      ++bases;
      if (s.sampling.temperature != 0.0)
        throw ConfigError("base strategy '" + s.id + "' must decode with temperature 0");
    }
    if (s.sampling.temperature < 0.0) throw ConfigError("temperature must be >= 0");
    if (!(s.sampling.top_p > 0.0 && s.sampling.top_p <= 1.0))
      throw ConfigError("top_p must lie in (0,1]");
    if (s.sampling.top_k < 0) throw ConfigError("top_k must be >= 0");
  }
  if (bases > 1) throw ConfigError("a round may hold at most one base strategy");
  if (first_round && bases != 1) throw ConfigError("first round needs exactly one base strategy");
}

void validate(const LoopConfig& cfg) {
  if (cfg.rounds.empty()) throw ConfigError("at least one round is required");
  for (std::size_t i = 0; i < cfg.rounds.size(); ++i)
    validate(cfg.rounds[i], i == 0, i + 1 == cfg.rounds.size());
  if (cfg.weights.size() != kForestTrees)
    throw ConfigError("weights must have " + std::to_string(kForestTrees) + " entries");
  if (!cfg.weights.allFinite() || (cfg.weights.array() < 0.0).any())
    throw ConfigError("weights must be finite and non-negative");
  if (std::abs(cfg.weights.sum() - 1.0) > 1e-9)
    throw ConfigError("weights must sum to 1 (got " + std::to_string(cfg.weights.sum()) + ")");
  if (cfg.k_top < 1) throw ConfigError("k_top must be >= 1");
  if (cfg.max_keyframes < 1) throw ConfigError("max_keyframes must be >= 1");
  if (cfg.dense_radius < 0) throw ConfigError("dense_radius must be >= 0");
  if (cfg.tie_break != "choice-order")
    throw ConfigError("unsupported tie_break '" + cfg.tie_break + "'");
  if (cfg.parallelism < 1) throw ConfigError("parallelism must be >= 1");
}

}  // namespace cyberv
