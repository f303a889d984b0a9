#include "cyberv/harness.hpp"
#include "cyberv/inference.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>
#include <httplib.h>

#include <fstream>
#include <set>
#include <sstream>
#include <thread>

namespace cyberv {
namespace {

using nlohmann::json;

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json fixture(const std::string& name) {
  return json::parse(slurp(testing::source_dir() / "tests/data/protocol" / name));
}

struct Correction : ::testing::Test {
  Task task = load_dataset(testing::data_dir() / "correction/dataset.jsonl").at(0).task;
  MockScenario scenario = MockScenario::load(testing::data_dir() / "correction/scenario.json");
  LoopConfig cfg = default_config();

  const Strategy& strategy(std::size_t round, const std::string& id) const {
    for (const auto& s : cfg.rounds[round].strategies)
      if (s.id == id) return s;
    throw std::logic_error("no strategy " + id);
  }
  FeedbackAction keyframes() const {
    FeedbackAction a;
    a.keyframes = {210, 360};
    a.note = std::string(kKeyframeNote);
    return a;
  }
};

// Prompts ------------------------------------------------------------------------

TEST_F(Correction, BasePromptGolden) {
  const auto p = render_prompt(task, strategy(0, "base"));
  EXPECT_EQ(p, slurp(testing::source_dir() / "tests/data/golden/prompt_base.txt"));
  EXPECT_EQ(p.find("Thinking Process:"), std::string::npos);
}

TEST_F(Correction, CotPromptGolden) {
  const auto p = render_prompt(task, strategy(0, "cot-3"));
  EXPECT_EQ(p, slurp(testing::source_dir() / "tests/data/golden/prompt_cot.txt"));
  EXPECT_TRUE(p.ends_with("Thinking Process:"));
}

TEST_F(Correction, FeedbackPromptGolden) {
  const auto p = render_prompt(task, strategy(1, "cot-kf"), std::string(kKeyframeNote));
  EXPECT_EQ(p, slurp(testing::source_dir() / "tests/data/golden/prompt_keyframes.txt"));
  const auto first = p.find(kKeyframeNote);
  ASSERT_NE(first, std::string::npos);
  EXPECT_EQ(p.find(kKeyframeNote, first + 1), std::string::npos);
}

// Mock lookup ----------------------------------------------------------------------

TEST_F(Correction, ScriptedBaseRecord) {
  const auto rec = mock_lookup(scenario, make_request(task, strategy(0, "base"), nullptr));
  EXPECT_EQ(rec.parsed, "A");
  ASSERT_TRUE(rec.attention);
  Eigen::Index peak;
  rec.attention->video.colwise().mean().maxCoeff(&peak);
  EXPECT_EQ(peak, 12);
}

TEST_F(Correction, ScriptedDriftingCot) {
  const auto rec = mock_lookup(scenario, make_request(task, strategy(0, "cot-0"), nullptr));
  EXPECT_EQ(rec.parsed, "B");
  EXPECT_TRUE(rec.text.starts_with("Thinking Process:"));
  ASSERT_TRUE(rec.attention);
}

TEST_F(Correction, KeyframeSignatureSelectsRevisedReply) {
  const auto fb = keyframes();
  const auto req = make_request(task, strategy(1, "cot-kf"), &fb);
  EXPECT_EQ(req.round_signature(), "keyframes");
  EXPECT_FALSE(req.want_attention);
  EXPECT_EQ(mock_lookup(scenario, req).parsed, "A");
  EXPECT_EQ(make_request(task, strategy(1, "cot-kf"), nullptr).round_signature(), "plain");
}

TEST_F(Correction, MissingKeyIsAScenarioError) {
  Strategy s = strategy(0, "cot-0");
  s.id = "cot-99";
  EXPECT_THROW(mock_lookup(scenario, make_request(task, s, nullptr)), ScenarioError);
  Task other = task;
  other.id = "nope";
  EXPECT_THROW(mock_lookup(scenario, make_request(other, strategy(0, "base"), nullptr)),
               ScenarioError);
}

TEST(MockScenario, CoversConditionPicksFirstMatchingEntry) {
  const json doc = json::parse(R"({"entries":[
    {"task_id":"t","strategy_id":"base","when":{"covers":[100,110]},
     "reply":{"text":"Answer: A","answer_logprobs":{},"attention":null,"token_count":1}},
    {"task_id":"t","strategy_id":"base",
     "reply":{"text":"Answer: B","answer_logprobs":{},"attention":null,"token_count":1}}]})");
  const MockScenario sc(doc);
  Task t = testing::simple_task("t", 4);
  const Strategy base = default_first_round_strategies(1)[0];
  EXPECT_EQ(mock_lookup(sc, make_request(t, base, nullptr)).parsed, "B");
  t.timeline.sampled_indices = {0, 30, 105, 119};
  EXPECT_EQ(mock_lookup(sc, make_request(t, base, nullptr)).parsed, "A");
}

TEST(MockScenario, RejectsMalformedDocuments) {
  EXPECT_THROW(MockScenario(json::parse("[]")), ScenarioError);
  EXPECT_THROW(MockScenario(json::parse(R"({"entries":[{"task_id":"t"}]})")), ScenarioError);
  EXPECT_THROW(MockScenario(json::parse(
                   R"({"entries":[{"task_id":"t","strategy_id":"s","round":"r2","reply":{}}]})")),
               ScenarioError);
  EXPECT_THROW(MockScenario::load("/nonexistent/scenario.json"), ScenarioError);
}

// execute_round ---------------------------------------------------------------------

TEST_F(Correction, FirstRoundYieldsEightDistinctRecordsInOrder) {
  const MockBackend backend(scenario);
  for (int par : {1, 2, 8}) {
    const auto recs = execute_round(task, cfg.rounds[0], nullptr, backend, par);
    ASSERT_EQ(recs.size(), 8u);
    std::set<std::string> ids;
    for (std::size_t i = 0; i < recs.size(); ++i) {
      EXPECT_EQ(recs[i].strategy_id, cfg.rounds[0].strategies[i].id);
      ids.insert(recs[i].strategy_id);
    }
    EXPECT_EQ(ids.size(), 8u);
  }
}

TEST_F(Correction, SingleBaseRound) {
  RoundConfig r;
  r.n_paths = 1;
  r.strategies = {strategy(0, "base")};
  const auto recs = execute_round(task, r, nullptr, MockBackend(scenario), 4);
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].parsed, "A");
}

TEST_F(Correction, DownBackendYieldsErrorRecords) {
  const MockBackend down(MockScenario(json::parse(R"({"down":true,"entries":[]})")));
  const auto recs = execute_round(task, cfg.rounds[0], nullptr, down, 3);
  ASSERT_EQ(recs.size(), 8u);
  for (const auto& r : recs) {
    EXPECT_TRUE(r.error);
    EXPECT_TRUE(r.text.empty());
    EXPECT_FALSE(r.parsed);
    EXPECT_FALSE(r.attention);
  }
}

struct ThrowingBackend final : Backend {
  json generate(const GenerateRequest& r) const override {
    if (r.strategy.id == "cot-2") throw ProtocolError("bad reply from cot-2");
    if (r.strategy.id == "cot-5") throw ProtocolError("bad reply from cot-5");
    return json{{"text", "Answer: A"}, {"attention", nullptr}};
  }
  std::string describe() const override { return "throwing"; }
};

TEST_F(Correction, ProtocolErrorsPropagateDeterministically) {
  for (int par : {1, 3, 8}) {
    try {
      execute_round(task, cfg.rounds[0], nullptr, ThrowingBackend{}, par);
      FAIL() << "expected a protocol error";
    } catch (const ProtocolError& e) {
      EXPECT_STREQ(e.what(), "bad reply from cot-2");
    }
  }
}

// Wire fixtures ---------------------------------------------------------------------

GenerateRequest fixture_request(const Correction& c, const json& entry) {
  const std::string sid = entry.at("strategy");
  const Strategy& s = c.strategy(sid == "cot-kf" ? 1 : 0, sid);
  FeedbackAction fb;
  fb.keyframes = entry.at("keyframes").get<std::vector<std::int64_t>>();
  if (!fb.keyframes.empty()) fb.note = std::string(kKeyframeNote);
  return make_request(c.task, s, fb.empty() ? nullptr : &fb);
}

TEST_F(Correction, RequestsMatchWireFixtures) {
  const json manifest = fixture("manifest.json");
  for (const auto& entry : manifest.at("requests")) {
    const auto req = fixture_request(*this, entry);
    EXPECT_EQ(to_wire(req), fixture(entry.at("file"))) << entry.at("file");
  }
}

TEST_F(Correction, RepliesMatchFixtureVerdicts) {
  const json manifest = fixture("manifest.json");
  std::map<std::string, GenerateRequest> requests;
  for (const auto& entry : manifest.at("requests"))
    requests.emplace(entry.at("file"), fixture_request(*this, entry));
  for (const auto& entry : manifest.at("replies")) {
    const auto& req = requests.at(entry.at("request"));
    const json reply = fixture(entry.at("file"));
    if (entry.at("valid").get<bool>())
      EXPECT_NO_THROW(from_wire(reply, req)) << entry.at("file");
    else
      EXPECT_THROW(from_wire(reply, req), ProtocolError) << entry.at("file");
  }
}

TEST_F(Correction, DecodedReplyFields) {
  const auto fb = keyframes();
  const auto rec = from_wire(fixture("reply_ok.json"), make_request(task, strategy(0, "base"), nullptr));
  EXPECT_EQ(rec.parsed, "A");
  EXPECT_EQ(rec.answer_token_logprobs.at("A"), -0.25);
  EXPECT_EQ(rec.token_count, 3);
  ASSERT_TRUE(rec.attention);
  EXPECT_EQ(rec.attention->heads(), 2);
  EXPECT_EQ(rec.attention->k1(), 16);
  EXPECT_EQ(rec.attention->k2(), 3);

  const auto none =
      from_wire(fixture("reply_no_logprobs.json"), make_request(task, strategy(1, "cot-kf"), &fb));
  EXPECT_EQ(none.parsed, "C");
  EXPECT_TRUE(none.answer_token_logprobs.empty());
}

TEST(Wire, AttentionRoundTrips) {
  std::mt19937_64 rng(37);
  for (int i = 0; i < 50; ++i) {
    const auto p = testing::random_profile(rng, 1 + i % 4, 1 + i % 9, i % 3);
    const auto q = attention_from_json(json::parse(attention_to_json(p).dump()));
    EXPECT_EQ(p.video, q.video);
    EXPECT_EQ(p.sub, q.sub);
  }
}

TEST(Wire, SeedAndScenarioKeyStayLocal) {
  Task t = testing::simple_task("t", 4);
  t.scenario_key = "family-1";
  const auto req = make_request(t, default_first_round_strategies(3)[2], nullptr);
  EXPECT_EQ(req.scenario_key, "family-1");
  const json body = to_wire(req);
  EXPECT_EQ(body.at("task_id"), "t");
  EXPECT_FALSE(body.contains("scenario_key"));
  EXPECT_FALSE(body.at("sampling").contains("seed"));
  EXPECT_FALSE(body.contains("zoom"));
}

// HTTP backend ----------------------------------------------------------------------

struct FakeServer {
  httplib::Server server;
  int port = 0;
  std::thread thread;

  explicit FakeServer(MockScenario scenario, Correction& fixture) {
    server.Get("/v1/health", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"status":"ok","model":"mock-vlm"})", "application/json");
    });
    server.Post("/v1/generate", [scenario, &fixture](const httplib::Request& req,
                                                     httplib::Response& res) {
      json body;
      try {
        body = json::parse(req.body);
      } catch (const json::parse_error&) {
        res.status = 400;
        return;
      }
      // Recover the strategy from the sampling block and prompt tail.
      const bool injected = !body.at("injected_frames").empty();
      std::string sid = "base";
      if (injected) {
        sid = "cot-kf";
      } else if (body.at("sampling").at("temperature") != 0.0) {
        sid = "cot-0";
      }
      if (body.value("prompt", "") == "overload") {
        res.status = 503;
        return;
      }
      auto r = make_request(fixture.task, fixture.strategy(injected ? 1 : 0, sid), nullptr);
      if (injected) r.frames.injected = body.at("injected_frames").get<std::vector<std::int64_t>>();
      r.want_attention = body.at("want_attention");
      res.set_content(scenario.lookup(r).dump(), "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~FakeServer() {
    server.stop();
    thread.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }
};

TEST_F(Correction, HttpBackendSpeaksTheWireProtocol) {
  FakeServer srv(scenario, *this);
  const HttpBackend http(srv.url(), 5.0);
  EXPECT_EQ(http.health().at("model"), "mock-vlm");

  const auto base = make_request(task, strategy(0, "base"), nullptr);
  const auto via_http = from_wire(http.generate(base), base);
  const auto direct = mock_lookup(scenario, base);
  EXPECT_EQ(via_http.text, direct.text);
  EXPECT_EQ(via_http.parsed, "A");
  ASSERT_TRUE(via_http.attention);
  EXPECT_EQ(via_http.attention->video, direct.attention->video);

  const auto fb = keyframes();
  const auto kf = make_request(task, strategy(1, "cot-kf"), &fb);
  const auto revised = from_wire(http.generate(kf), kf);
  EXPECT_EQ(revised.parsed, "A");
  EXPECT_FALSE(revised.attention);
}

TEST_F(Correction, HttpOverloadDegradesToErrorRecord) {
  FakeServer srv(scenario, *this);
  const HttpBackend http(srv.url(), 5.0);
  auto req = make_request(task, strategy(0, "base"), nullptr);
  req.prompt = "overload";
  EXPECT_THROW(http.generate(req), BackendUnavailable);
}

TEST(HttpBackend, DeadEndpointIsUnavailable) {
  // Bind then release a port so nothing listens there.
  int port;
  {
    httplib::Server s;
    port = s.bind_to_any_port("127.0.0.1");
  }
  const HttpBackend http("http://127.0.0.1:" + std::to_string(port), 0.5);
  EXPECT_THROW(http.health(), BackendUnavailable);
  const Task t = testing::simple_task("t", 4);
  RoundConfig r;
  r.n_paths = 2;
  r.strategies = default_first_round_strategies(2);
  const auto recs = execute_round(t, r, nullptr, http, 2);
  for (const auto& rec : recs) EXPECT_TRUE(rec.error);
}

}  // namespace
}  // namespace cyberv
