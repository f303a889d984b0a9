#pragma once

#include "cyberv/controller.hpp"
#include "cyberv/inference.hpp"
#include "cyberv/sensor.hpp"

#include <nlohmann/json.hpp>

namespace cyberv {

struct RoundTrace {
  int round = 0;
  /// Feedback this round consumed, if any.
  std::optional<FeedbackAction> feedback_in;
  std::vector<ResponseRecord> responses;
  SignalBundle signals;
  std::vector<ScoreVector> scores;
  Eigen::VectorXd aggregates;
  ControlDecision decision;
  double wall_ms = 0.0;
};

struct LoopTrace {
  std::string task_id;
  std::vector<RoundTrace> rounds;
  std::optional<std::string> answer;
  int rounds_used = 0;

  int backend_calls() const;
};

/// execute -> sense -> score -> decide for round `round_index` of `cfg`.
RoundTrace run_one_loop(const Task& task, const LoopConfig& cfg, std::size_t round_index,
                        const std::optional<FeedbackAction>& feedback, const Backend& backend);

/// Runs rounds until one accepts. Feedback from a revising round is applied to
/// the next round only.
LoopTrace run(const Task& task, const LoopConfig& cfg, const Backend& backend);

nlohmann::json to_json(const FeedbackAction& a);
FeedbackAction feedback_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DriftSignal& d);

/// Trace document. Wall times are omitted when `include_timing` is false so
/// that traces of identical runs compare equal.
nlohmann::json to_json(const LoopTrace& trace, bool include_timing = true);

/// Reads back a trace document written by to_json.
LoopTrace trace_from_json(const nlohmann::json& j);

}  // namespace cyberv
