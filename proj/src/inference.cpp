#include "cyberv/inference.hpp"

#include "cyberv/parallel.hpp"
#include "cyberv/sensor.hpp"

#include <httplib.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace cyberv {

using nlohmann::json;

std::string GenerateRequest::round_signature() const {
  return frames.injected.empty() && frames.dense_windows.empty() ? "plain" : "keyframes";
}

GenerateRequest make_request(const Task& task, const Strategy& strategy,
                             const FeedbackAction* feedback) {
  GenerateRequest req;
  req.task_id = task.id;
  req.scenario_key = task.scenario_key.value_or(task.id);
  req.media_ref = task.media_ref;
  req.choices = task.choices;
  for (const auto& s : task.subtitles) req.subtitle_spans.emplace_back(s.start_s, s.end_s);
  req.frames.sampled = task.timeline.sampled_indices;
  req.strategy = strategy;
  req.want_attention =
      strategy.kind == StrategyKind::Base || strategy.kind == StrategyKind::CoT;
  req.want_logprobs = true;
  std::optional<std::string> note;
  if (feedback && !feedback->empty()) {
    req.frames.injected = feedback->keyframes;
    req.frames.dense_windows = feedback->dense_windows;
    req.zoom = feedback->zoom;
    if (!feedback->note.empty()) note = feedback->note;
  }
  req.prompt = render_prompt(task, strategy, note);
  return req;
}

namespace {

std::string format_seconds(double s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1fs", s);
  return buf;
}

}  // namespace

std::string render_prompt(const Task& task, const Strategy& strategy,
                          const std::optional<std::string>& feedback_note) {
  std::ostringstream os;
  os << "Question: " << task.question << "\n";
  os << "Options:\n";
  for (std::size_t i = 0; i < task.choices.labels.size(); ++i) {
    os << "(" << task.choices.labels[i] << ")";
    if (task.choices.has_texts()) os << " " << task.choices.texts[i];
    os << "\n";
  }
  if (!task.subtitles.empty()) {
    os << "Subtitles:\n";
    for (const auto& s : task.subtitles)
      os << "[" << format_seconds(s.start_s) << " - " << format_seconds(s.end_s) << "] " << s.text
         << "\n";
  }
  if (feedback_note) os << *feedback_note << "\n";
  if (strategy.kind == StrategyKind::Base)
    os << "Answer with the option's letter from the given choices directly.";
  else
    os << "Reason step by step, then give the final answer as \"Answer: X\".";
  if (!strategy.prompt_prefix.empty()) os << "\n" << strategy.prompt_prefix;
  return os.str();
}

json attention_to_json(const AttentionProfile& p) {
  auto rows = [](const Eigen::MatrixXd& m) {
    json out = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      json row = json::array();
      for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
      out.push_back(std::move(row));
    }
    return out;
  };
  return json{{"heads", p.heads()}, {"video", rows(p.video)}, {"sub", rows(p.sub)}};
}

AttentionProfile attention_from_json(const json& j) {
  if (!j.is_object()) throw ProtocolError("attention must be an object or null");
  if (!j.contains("heads") || !j["heads"].is_number_integer() || j["heads"].get<int>() < 1)
    throw ProtocolError("attention.heads must be a positive integer");
  const int heads = j["heads"].get<int>();
  auto matrix = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_array())
      throw ProtocolError(std::string("attention.") + key + " must be an array");
    const json& rows = j[key];
    if (rows.empty()) return Eigen::MatrixXd(heads, 0);
    if (static_cast<int>(rows.size()) != heads)
      throw ProtocolError(std::string("attention.") + key + " must have one row per head");
    const std::size_t cols = rows[0].is_array() ? rows[0].size() : 0;
    Eigen::MatrixXd m(heads, static_cast<Eigen::Index>(cols));
    for (int r = 0; r < heads; ++r) {
      const json& row = rows[static_cast<std::size_t>(r)];
      if (!row.is_array() || row.size() != cols)
        throw ProtocolError(std::string("attention.") + key + " rows must be equal-length arrays");
      for (std::size_t c = 0; c < cols; ++c) {
        if (!row[c].is_number()) throw ProtocolError("attention entries must be numbers");
        m(r, static_cast<Eigen::Index>(c)) = row[c].get<double>();
      }
    }
    return m;
  };
  AttentionProfile p;
  p.video = matrix("video");
  p.sub = matrix("sub");
  return p;
}

json to_wire(const GenerateRequest& r) {
  json dense = json::array();
  for (const auto& w : r.frames.dense_windows) dense.push_back(json::array({w.center, w.radius}));
  json spans = json::array();
  for (const auto& [a, b] : r.subtitle_spans) spans.push_back(json::array({a, b}));
  json body{{"task_id", r.task_id},
            {"prompt", r.prompt},
            {"media_ref", r.media_ref},
            {"frame_indices", r.frames.sampled},
            {"injected_frames", r.frames.injected},
            {"dense_windows", dense},
            {"sampling",
             {{"temperature", r.strategy.sampling.temperature},
              {"top_p", r.strategy.sampling.top_p},
              {"top_k", r.strategy.sampling.top_k}}},
            {"want_attention", r.want_attention},
            {"want_logprobs", r.want_logprobs},
            {"segment_def", {{"k1", r.k1()}, {"subtitle_spans", spans}}}};
  if (r.zoom)
    body["zoom"] = {{"x", r.zoom->x}, {"y", r.zoom->y}, {"width", r.zoom->width},
                    {"height", r.zoom->height}};
  return body;
}

ResponseRecord from_wire(const json& reply, const GenerateRequest& request) {
  if (!reply.is_object()) throw ProtocolError("reply must be a JSON object");
  ResponseRecord rec;
  rec.strategy_id = request.strategy.id;
  rec.kind = request.strategy.kind;
  auto text = reply.find("text");
  if (text == reply.end() || !text->is_string()) throw ProtocolError("reply.text must be a string");
  rec.text = text->get<std::string>();

  if (auto lp = reply.find("answer_logprobs"); lp != reply.end() && !lp->is_null()) {
    if (!lp->is_object()) throw ProtocolError("reply.answer_logprobs must be an object");
    for (auto it = lp->begin(); it != lp->end(); ++it) {
      if (!it->is_number()) throw ProtocolError("answer_logprobs values must be numbers");
      const double v = it->get<double>();
      if (!std::isfinite(v) || v > 0.0)
        throw ProtocolError("answer_logprobs['" + it.key() + "'] must be a finite value <= 0");
      if (request.choices.contains(it.key())) rec.answer_token_logprobs[it.key()] = v;
    }
  }

  if (auto att = reply.find("attention"); att != reply.end() && !att->is_null()) {
    AttentionProfile p = attention_from_json(*att);
    try {
      validate_profile(p, request.k1(), request.k2());
    } catch (const ValidationError& e) {
      throw ProtocolError(std::string("invalid attention: ") + e.what());
    }
    if (request.want_attention) rec.attention = std::move(p);
  }

  if (auto tc = reply.find("token_count"); tc != reply.end()) {
    if (!tc->is_number_integer() || tc->get<long long>() < 0)
      throw ProtocolError("reply.token_count must be a non-negative integer");
    rec.token_count = tc->get<int>();
  }
  rec.parsed = parse_prediction(rec.text, request.choices);
  return rec;
}

// Mock backend ---------------------------------------------------------------

MockScenario::MockScenario(const json& doc) {
  if (!doc.is_object() || !doc.contains("entries") || !doc["entries"].is_array())
    throw ScenarioError("scenario must be an object with an 'entries' array");
  down_ = doc.value("down", false);
  for (std::size_t i = 0; i < doc["entries"].size(); ++i) {
    const json& e = doc["entries"][i];
    const std::string where = "scenario entry " + std::to_string(i);
    if (!e.is_object()) throw ScenarioError(where + " must be an object");
    Entry entry;
    try {
      entry.task_id = e.at("task_id").get<std::string>();
      entry.strategy_id = e.at("strategy_id").get<std::string>();
      entry.round = e.value("round", std::string("plain"));
      if (auto w = e.find("when"); w != e.end()) {
        const json& c = w->at("covers");
        entry.covers = {c.at(0).get<std::int64_t>(), c.at(1).get<std::int64_t>()};
      }
      entry.unavailable = e.value("fail", std::string()) == "unavailable";
      if (!entry.unavailable) entry.reply = e.at("reply");
    } catch (const json::exception& ex) {
      throw ScenarioError(where + ": " + ex.what());
    }
    if (entry.round != "plain" && entry.round != "keyframes")
      throw ScenarioError(where + ": round must be 'plain' or 'keyframes'");
    entries_.push_back(std::move(entry));
  }
}

MockScenario MockScenario::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError("cannot open scenario file " + path.string());
  try {
    return MockScenario(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ScenarioError("scenario " + path.string() + " is not valid JSON: " + e.what());
  }
}

namespace {

bool touches(const FrameSpec& f, std::int64_t lo, std::int64_t hi) {
  auto in = [&](std::int64_t x) { return x >= lo && x <= hi; };
  for (auto x : f.sampled)
    if (in(x)) return true;
  for (auto x : f.injected)
    if (in(x)) return true;
  for (const auto& w : f.dense_windows)
    if (w.center - w.radius <= hi && w.center + w.radius >= lo) return true;
  return false;
}

}  // namespace

json MockScenario::lookup(const GenerateRequest& request) const {
  if (down_) throw BackendUnavailable("mock backend is scripted as down");
  const std::string sig = request.round_signature();
  for (const auto& e : entries_) {
    if (e.task_id != request.scenario_key || e.strategy_id != request.strategy.id || e.round != sig)
      continue;
    if (e.covers && !touches(request.frames, e.covers->first, e.covers->second)) continue;
    if (e.unavailable) throw BackendUnavailable("scripted failure for " + request.task_id);
    json reply = e.reply;
    if (!request.want_attention && reply.is_object()) reply["attention"] = nullptr;
    return reply;
  }
  throw ScenarioError("no scripted reply for (" + request.scenario_key + ", " + request.strategy.id +
                      ", " + sig + ")");
}

ResponseRecord mock_lookup(const MockScenario& scenario, const GenerateRequest& request) {
  return from_wire(scenario.lookup(request), request);
}

json MockBackend::generate(const GenerateRequest& request) const {
  return scenario_.lookup(request);
}

// HTTP backend -----------------------------------------------------------------

HttpBackend::HttpBackend(std::string endpoint, double timeout_s)
    : endpoint_(std::move(endpoint)), timeout_s_(timeout_s) {}

namespace {

httplib::Client make_client(const std::string& endpoint, double timeout_s) {
  httplib::Client cli(endpoint);
  const auto sec = static_cast<time_t>(timeout_s);
  const auto usec = static_cast<time_t>((timeout_s - static_cast<double>(sec)) * 1e6);
  cli.set_connection_timeout(sec, usec);
  cli.set_read_timeout(sec, usec);
  cli.set_write_timeout(sec, usec);
  return cli;
}

json read_reply(const httplib::Result& res, const std::string& what) {
  if (!res) throw BackendUnavailable(what + ": " + httplib::to_string(res.error()));
  if (res->status >= 500 || res->status == 408 || res->status == 429)
    throw BackendUnavailable(what + ": HTTP " + std::to_string(res->status));
  if (res->status != 200) throw ProtocolError(what + ": HTTP " + std::to_string(res->status));
  try {
    return json::parse(res->body);
  } catch (const json::parse_error& e) {
    throw ProtocolError(what + ": reply is not valid JSON: " + e.what());
  }
}

}  // namespace

json HttpBackend::generate(const GenerateRequest& request) const {
  auto cli = make_client(endpoint_, timeout_s_);
  auto res = cli.Post("/v1/generate", to_wire(request).dump(), "application/json");
  return read_reply(res, "POST " + endpoint_ + "/v1/generate");
}

json HttpBackend::health() const {
  auto cli = make_client(endpoint_, timeout_s_);
  json reply = read_reply(cli.Get("/v1/health"), "GET " + endpoint_ + "/v1/health");
  if (!reply.is_object() || reply.value("status", "") != "ok")
    throw ProtocolError("health reply must carry status 'ok'");
  return reply;
}

std::unique_ptr<Backend> make_backend(const BackendDescriptor& d) {
  if (d.max_parallel < 1) throw ValidationError("backend max_parallel must be >= 1");
  if (d.kind == BackendDescriptor::Kind::Mock)
    return std::make_unique<MockBackend>(MockScenario::load(d.target));
  return std::make_unique<HttpBackend>(d.target, d.timeout_s);
}

std::vector<ResponseRecord> execute_round(const Task& task, const RoundConfig& round,
                                          const FeedbackAction* feedback, const Backend& backend,
                                          int max_parallel) {
  std::vector<ResponseRecord> out(round.strategies.size());
  parallel_for(round.strategies.size(), max_parallel, [&](std::size_t i) {
    const Strategy& s = round.strategies[i];
    const GenerateRequest req = make_request(task, s, feedback);
    try {
      out[i] = from_wire(backend.generate(req), req);
    } catch (const BackendUnavailable& e) {
      ResponseRecord rec;
      rec.strategy_id = s.id;
      rec.kind = s.kind;
      rec.error = e.what();
      out[i] = std::move(rec);
    }
  });
  return out;
}

}  // namespace cyberv
