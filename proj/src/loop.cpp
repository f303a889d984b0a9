#include "cyberv/loop.hpp"

#include <chrono>

namespace cyberv {

using nlohmann::json;

int LoopTrace::backend_calls() const {
  int n = 0;
  for (const auto& r : rounds) n += static_cast<int>(r.responses.size());
  return n;
}

RoundTrace run_one_loop(const Task& task, const LoopConfig& cfg, std::size_t round_index,
                        const std::optional<FeedbackAction>& feedback, const Backend& backend) {
  const RoundConfig& round = cfg.rounds.at(round_index);
  const bool final_round = round_index + 1 == cfg.rounds.size();
  const auto t0 = std::chrono::steady_clock::now();

  RoundTrace rt;
  rt.round = static_cast<int>(round_index) + 1;
  rt.feedback_in = feedback;
  rt.responses = execute_round(task, round, feedback ? &*feedback : nullptr, backend,
                               cfg.parallelism);
  rt.signals = collect_signals(rt.responses);
  rt.scores = score_round(rt.signals);
  rt.aggregates = aggregate_round(rt.scores, cfg);

  std::vector<std::optional<std::string>> answers;
  answers.reserve(rt.signals.responses.size());
  for (const auto& s : rt.signals.responses) answers.push_back(s.parsed);
  const TopScore top = top_score(answers, rt.aggregates, task.choices);
  rt.decision = decide(top, round, final_round, rt.signals, task, cfg);

  rt.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return rt;
}

LoopTrace run(const Task& task, const LoopConfig& cfg, const Backend& backend) {
  LoopTrace trace;
  trace.task_id = task.id;
  std::optional<FeedbackAction> feedback;
  for (std::size_t r = 0; r < cfg.rounds.size(); ++r) {
    trace.rounds.push_back(run_one_loop(task, cfg, r, feedback, backend));
    const ControlDecision& d = trace.rounds.back().decision;
    if (d.accepted()) {
      trace.answer = d.top_label;
      break;
    }
    feedback = d.feedback;
    if (feedback && feedback->empty()) feedback.reset();
  }
  trace.rounds_used = static_cast<int>(trace.rounds.size());
  return trace;
}

// Serialization ----------------------------------------------------------------

namespace {

template <typename T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

std::optional<std::string> optional_string(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<std::string>();
}

json vector_json(const Eigen::VectorXd& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

Eigen::VectorXd vector_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json to_json(const ResponseRecord& r) {
  return json{{"strategy_id", r.strategy_id},
              {"kind", to_string(r.kind)},
              {"text", r.text},
              {"parsed", optional_json(r.parsed)},
              {"answer_logprobs", r.answer_token_logprobs},
              {"attention", r.attention ? attention_to_json(*r.attention) : json(nullptr)},
              {"token_count", r.token_count},
              {"error", optional_json(r.error)}};
}

ResponseRecord response_from_json(const json& j) {
  ResponseRecord r;
  r.strategy_id = j.at("strategy_id").get<std::string>();
  r.kind = strategy_kind_from_string(j.at("kind").get<std::string>());
  r.text = j.at("text").get<std::string>();
  r.parsed = optional_string(j, "parsed");
  r.answer_token_logprobs = j.at("answer_logprobs").get<std::map<std::string, double>>();
  if (!j.at("attention").is_null()) r.attention = attention_from_json(j.at("attention"));
  r.token_count = j.at("token_count").get<int>();
  r.error = optional_string(j, "error");
  return r;
}

json to_json(const SignalBundle& b) {
  json responses = json::array();
  for (const auto& s : b.responses)
    responses.push_back(json{{"parsed", optional_json(s.parsed)},
                             {"confidence", s.confidence},
                             {"repetition", s.repetition},
                             {"retention", s.retention},
                             {"has_attention", s.has_attention}});
  return json{{"base_index", optional_json(b.base_index)},
              {"responses", responses},
              {"drift", b.drift ? to_json(*b.drift) : json(nullptr)}};
}

SignalBundle bundle_from_json(const json& j) {
  SignalBundle b;
  if (!j.at("base_index").is_null()) b.base_index = j.at("base_index").get<std::size_t>();
  for (const auto& s : j.at("responses")) {
    ResponseSignals rs;
    rs.parsed = optional_string(s, "parsed");
    rs.confidence = s.at("confidence").get<double>();
    rs.repetition = s.at("repetition").get<bool>();
    rs.retention = s.at("retention").get<double>();
    rs.has_attention = s.at("has_attention").get<bool>();
    b.responses.push_back(std::move(rs));
  }
  if (const json& d = j.at("drift"); !d.is_null()) {
    DriftSignal ds;
    ds.video = vector_from_json(d.at("video"));
    ds.sub = vector_from_json(d.at("sub"));
    ds.base_strategy_id = d.at("base_strategy_id").get<std::string>();
    ds.cot_strategy_id = d.at("cot_strategy_id").get<std::string>();
    b.drift = std::move(ds);
  }
  return b;
}

json to_json(const ControlDecision& d) {
  return json{{"verdict", d.accepted() ? "accept" : "revise"},
              {"top_label", optional_json(d.top_label)},
              {"top_score", d.top_score},
              {"threshold", d.threshold},
              {"per_option", d.per_option},
              {"feedback", d.feedback ? to_json(*d.feedback) : json(nullptr)}};
}

ControlDecision decision_from_json(const json& j) {
  ControlDecision d;
  d.verdict = j.at("verdict").get<std::string>() == "accept" ? Verdict::Accept : Verdict::Revise;
  d.top_label = optional_string(j, "top_label");
  d.top_score = j.at("top_score").get<double>();
  d.threshold = j.at("threshold").get<double>();
  d.per_option = j.at("per_option").get<std::map<std::string, double>>();
  if (!j.at("feedback").is_null()) d.feedback = feedback_from_json(j.at("feedback"));
  return d;
}

}  // namespace

json to_json(const FeedbackAction& a) {
  json dense = json::array();
  for (const auto& w : a.dense_windows) dense.push_back(json::array({w.center, w.radius}));
  json out{{"keyframes", a.keyframes}, {"dense_windows", dense}, {"note", a.note}};
  out["zoom"] = a.zoom ? json{{"x", a.zoom->x},
                              {"y", a.zoom->y},
                              {"width", a.zoom->width},
                              {"height", a.zoom->height}}
                       : json(nullptr);
  return out;
}

FeedbackAction feedback_from_json(const json& j) {
  FeedbackAction a;
  a.keyframes = j.at("keyframes").get<std::vector<std::int64_t>>();
  for (const auto& w : j.at("dense_windows"))
    a.dense_windows.push_back({w.at(0).get<std::int64_t>(), w.at(1).get<std::int64_t>()});
  a.note = j.at("note").get<std::string>();
  if (auto z = j.find("zoom"); z != j.end() && !z->is_null())
    a.zoom = ZoomRegion{z->at("x").get<double>(), z->at("y").get<double>(),
                        z->at("width").get<double>(), z->at("height").get<double>()};
  return a;
}

json to_json(const DriftSignal& d) {
  return json{{"video", vector_json(d.video)},
              {"sub", vector_json(d.sub)},
              {"base_strategy_id", d.base_strategy_id},
              {"cot_strategy_id", d.cot_strategy_id}};
}

json to_json(const LoopTrace& trace, bool include_timing) {
  json rounds = json::array();
  for (const auto& r : trace.rounds) {
    json responses = json::array();
    for (const auto& rec : r.responses) responses.push_back(to_json(rec));
    json scores = json::array();
    for (std::size_t n = 0; n < r.scores.size(); ++n)
      scores.push_back(json{{"response", r.scores[n].response},
                            {"s", vector_json(r.scores[n].s)},
                            {"aggregate", r.aggregates(static_cast<Eigen::Index>(n))}});
    json round{{"round", r.round},
               {"feedback_in", r.feedback_in ? to_json(*r.feedback_in) : json(nullptr)},
               {"responses", responses},
               {"signals", to_json(r.signals)},
               {"scores", scores},
               {"decision", to_json(r.decision)}};
    if (include_timing) round["wall_ms"] = r.wall_ms;
    rounds.push_back(std::move(round));
  }
  return json{{"task_id", trace.task_id},
              {"answer", optional_json(trace.answer)},
              {"rounds_used", trace.rounds_used},
              {"backend_calls", trace.backend_calls()},
              {"trees", kTreeNames},
              {"rounds", rounds}};
}

LoopTrace trace_from_json(const json& j) {
  LoopTrace t;
  t.task_id = j.at("task_id").get<std::string>();
  t.answer = optional_string(j, "answer");
  t.rounds_used = j.at("rounds_used").get<int>();
  for (const auto& r : j.at("rounds")) {
    RoundTrace rt;
    rt.round = r.at("round").get<int>();
    if (!r.at("feedback_in").is_null()) rt.feedback_in = feedback_from_json(r.at("feedback_in"));
    for (const auto& rec : r.at("responses")) rt.responses.push_back(response_from_json(rec));
    rt.signals = bundle_from_json(r.at("signals"));
    const json& scores = r.at("scores");
    rt.aggregates.resize(static_cast<Eigen::Index>(scores.size()));
    for (std::size_t n = 0; n < scores.size(); ++n) {
      ScoreVector sv;
      sv.response = scores[n].at("response").get<std::size_t>();
      sv.s = vector_from_json(scores[n].at("s"));
      rt.scores.push_back(std::move(sv));
      rt.aggregates(static_cast<Eigen::Index>(n)) = scores[n].at("aggregate").get<double>();
    }
    rt.decision = decision_from_json(r.at("decision"));
    rt.wall_ms = r.value("wall_ms", 0.0);
    t.rounds.push_back(std::move(rt));
  }
  return t;
}

}  // namespace cyberv
