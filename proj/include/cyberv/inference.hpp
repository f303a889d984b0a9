#pragma once

#include "cyberv/controller.hpp"
#include "cyberv/core.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <memory>

namespace cyberv {

struct FrameSpec {
  std::vector<std::int64_t> sampled;
  std::vector<std::int64_t> injected;
  std::vector<DenseWindow> dense_windows;
};

struct GenerateRequest {
  std::string task_id;
  /// Lookup key for scripted backends; never sent on the wire.
  std::string scenario_key;
  std::string prompt;
  std::string media_ref;
  ChoiceSet choices;
  std::vector<std::pair<double, double>> subtitle_spans;
  FrameSpec frames;
  Strategy strategy;
  bool want_attention = false;
  bool want_logprobs = true;
  std::optional<ZoomRegion> zoom;

  /// Video segments in the model input: every sampled and injected frame.
  int k1() const { return static_cast<int>(frames.sampled.size() + frames.injected.size()); }
  int k2() const { return static_cast<int>(subtitle_spans.size()); }
  /// "keyframes" when feedback altered the visual input, "plain" otherwise.
  std::string round_signature() const;
};

/// Builds the request one strategy issues for `task`, merging feedback frames.
GenerateRequest make_request(const Task& task, const Strategy& strategy,
                             const FeedbackAction* feedback);

/// Deterministic prompt: question, lettered choices, subtitles, feedback note,
/// answer instruction, strategy prefix.
std::string render_prompt(const Task& task, const Strategy& strategy,
                          const std::optional<std::string>& feedback_note = std::nullopt);

// Wire protocol --------------------------------------------------------------

/// POST /v1/generate body.
nlohmann::json to_wire(const GenerateRequest& request);

/// Decodes a /v1/generate reply. Throws ProtocolError on schema violations or
/// attention that breaks the profile invariants for the request's shape.
ResponseRecord from_wire(const nlohmann::json& reply, const GenerateRequest& request);

nlohmann::json attention_to_json(const AttentionProfile& p);
AttentionProfile attention_from_json(const nlohmann::json& j);

// Backends -------------------------------------------------------------------

class Backend {
 public:
  virtual ~Backend() = default;
  /// Returns the raw reply. Must be safe to call concurrently.
  /// Throws BackendUnavailable on transport failure.
  virtual nlohmann::json generate(const GenerateRequest& request) const = 0;
  virtual std::string describe() const = 0;
};

/// Scripted replies keyed by (task_id, strategy_id, round signature). An entry
/// may carry a `when.covers` [lo, hi] condition that holds iff the request's
/// effective frame set (sampled, injected, dense windows) touches that range;
/// the first matching entry for a key wins.
class MockScenario {
 public:
  MockScenario() = default;
  explicit MockScenario(const nlohmann::json& doc);
  static MockScenario load(const std::filesystem::path& path);

  nlohmann::json lookup(const GenerateRequest& request) const;
  std::size_t size() const { return entries_.size(); }

 private:
  struct Entry {
    std::string task_id, strategy_id, round;
    std::optional<std::pair<std::int64_t, std::int64_t>> covers;
    bool unavailable = false;
    nlohmann::json reply;
  };
  std::vector<Entry> entries_;
  bool down_ = false;
};

ResponseRecord mock_lookup(const MockScenario& scenario, const GenerateRequest& request);

class MockBackend final : public Backend {
 public:
  explicit MockBackend(MockScenario scenario) : scenario_(std::move(scenario)) {}
  nlohmann::json generate(const GenerateRequest& request) const override;
  std::string describe() const override { return "mock"; }

 private:
  MockScenario scenario_;
};

class HttpBackend final : public Backend {
 public:
  HttpBackend(std::string endpoint, double timeout_s);
  nlohmann::json generate(const GenerateRequest& request) const override;
  std::string describe() const override { return endpoint_; }
  /// GET /v1/health.
  nlohmann::json health() const;

 private:
  std::string endpoint_;
  double timeout_s_;
};

struct BackendDescriptor {
  enum class Kind { Mock, Remote };
  Kind kind = Kind::Mock;
  /// Scenario file for Mock, base URL for Remote.
  std::string target;
  double timeout_s = 60.0;
  int max_parallel = 8;
};

std::unique_ptr<Backend> make_backend(const BackendDescriptor& descriptor);

/// Issues one request per strategy, at most `max_parallel` in flight, and
/// returns records in strategy order. Unreachable backends yield error
/// records; protocol and scenario errors propagate.
std::vector<ResponseRecord> execute_round(const Task& task, const RoundConfig& round,
                                          const FeedbackAction* feedback, const Backend& backend,
                                          int max_parallel);

}  // namespace cyberv
