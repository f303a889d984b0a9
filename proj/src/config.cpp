#include "cyberv/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace cyberv {

using nlohmann::json;

namespace {

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

template <typename T>
T get_field(const json& obj, const char* key, T fallback, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) throw ConfigError("");
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!it->is_number_unsigned()) throw ConfigError("");
    } else if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_integer()) throw ConfigError("");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!it->is_number()) throw ConfigError("");
    } else {
      if (!it->is_string()) throw ConfigError("");
    }
    return it->get<T>();
  } catch (const std::exception&) {
    throw ConfigError("field '" + std::string(key) + "' in " + where + " has the wrong type");
  }
}

Strategy parse_strategy(const json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  reject_unknown_keys(j, {"id", "kind", "temperature", "top_p", "top_k", "seed", "prompt_prefix"},
                      where);
  Strategy s;
  s.id = get_field<std::string>(j, "id", "", where);
  try {
    s.kind = strategy_kind_from_string(get_field<std::string>(j, "kind", "cot", where));
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  const bool base = s.kind == StrategyKind::Base;
  s.sampling.temperature = get_field<double>(j, "temperature", base ? 0.0 : 1.0, where);
  s.sampling.top_p = get_field<double>(j, "top_p", base ? 1.0 : 0.5, where);
  s.sampling.top_k = get_field<int>(j, "top_k", base ? 0 : 5, where);
  s.sampling.seed = get_field<std::uint64_t>(j, "seed", 0, where);
  s.prompt_prefix =
      get_field<std::string>(j, "prompt_prefix", base ? "" : std::string(kCotTrigger), where);
  return s;
}

RoundConfig parse_round(const json& j, std::size_t index) {
  const std::string where = "rounds[" + std::to_string(index) + "]";
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  reject_unknown_keys(j, {"n", "tau", "strategies", "feedback", "dense_sampling"}, where);
  RoundConfig r;
  r.tau = get_field<double>(j, "tau", 0.0, where);
  r.feedback_enabled = get_field<bool>(j, "feedback", true, where);
  r.dense_sampling = get_field<bool>(j, "dense_sampling", false, where);
  if (auto it = j.find("strategies"); it != j.end()) {
    if (!it->is_array()) throw ConfigError(where + ".strategies must be an array");
    for (std::size_t i = 0; i < it->size(); ++i)
      r.strategies.push_back(
          parse_strategy((*it)[i], where + ".strategies[" + std::to_string(i) + "]"));
    r.n_paths = get_field<int>(j, "n", static_cast<int>(r.strategies.size()), where);
  } else {
    r.n_paths = get_field<int>(j, "n", 1, where);
    if (r.n_paths < 1) throw ConfigError(where + " needs n >= 1");
    r.strategies = index == 0 ? default_first_round_strategies(r.n_paths)
                              : default_revision_strategies(r.n_paths);
  }
  return r;
}

}  // namespace

std::vector<Strategy> default_first_round_strategies(int n) {
  std::vector<Strategy> out;
  out.push_back(Strategy{"base", StrategyKind::Base, SamplingParams{0.0, 1.0, 0, 0}, ""});
  for (int i = 0; i + 1 < n; ++i)
    out.push_back(Strategy{"cot-" + std::to_string(i), StrategyKind::CoT,
                           SamplingParams{1.0, 0.5, 5, static_cast<std::uint64_t>(i)},
                           std::string(kCotTrigger)});
  return out;
}

std::vector<Strategy> default_revision_strategies(int n) {
  std::vector<Strategy> out;
  for (int i = 0; i < n; ++i) {
    Strategy s;
    s.id = n == 1 ? "cot-kf" : "cot-kf-" + std::to_string(i);
    s.kind = StrategyKind::CoTWithKeyFrames;
    s.sampling = n == 1 ? SamplingParams{0.0, 1.0, 0, 0}
                        : SamplingParams{1.0, 0.5, 5, static_cast<std::uint64_t>(i)};
    s.prompt_prefix = std::string(kCotTrigger);
    out.push_back(std::move(s));
  }
  return out;
}

LoopConfig default_config() {
  LoopConfig cfg;
  RoundConfig first;
  first.n_paths = kDefaultFirstRoundPaths;
  first.tau = kDefaultFirstRoundTau;
  first.strategies = default_first_round_strategies(first.n_paths);
  RoundConfig second;
  second.n_paths = 1;
  second.tau = 0.0;
  second.strategies = default_revision_strategies(1);
  cfg.rounds = {first, second};
  cfg.weights = Eigen::VectorXd::Constant(kForestTrees, 1.0 / kForestTrees);
  cfg.k_top = kDefaultTopK;
  cfg.max_keyframes = kDefaultMaxKeyframes;
  cfg.parallelism = kDefaultParallelism;
  return cfg;
}

LoopConfig load_config_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config document must be a JSON object");
  reject_unknown_keys(doc,
                      {"rounds", "weights", "k_top", "max_keyframes", "dense_radius", "tie_break",
                       "parallelism", "scoring"},
                      "config");
  LoopConfig cfg = default_config();
  if (auto it = doc.find("rounds"); it != doc.end()) {
    if (!it->is_array() || it->empty()) throw ConfigError("rounds must be a non-empty array");
    cfg.rounds.clear();
    for (std::size_t i = 0; i < it->size(); ++i) cfg.rounds.push_back(parse_round((*it)[i], i));
  }
  if (auto it = doc.find("weights"); it != doc.end()) {
    if (!it->is_array()) throw ConfigError("weights must be an array");
    cfg.weights.resize(static_cast<Eigen::Index>(it->size()));
    for (std::size_t i = 0; i < it->size(); ++i) {
      if (!(*it)[i].is_number()) throw ConfigError("weights must be numbers");
      cfg.weights(static_cast<Eigen::Index>(i)) = (*it)[i].get<double>();
    }
  }
  cfg.k_top = get_field<int>(doc, "k_top", cfg.k_top, "config");
  cfg.max_keyframes = get_field<int>(doc, "max_keyframes", cfg.max_keyframes, "config");
  cfg.dense_radius = get_field<int>(doc, "dense_radius", cfg.dense_radius, "config");
  cfg.tie_break = get_field<std::string>(doc, "tie_break", cfg.tie_break, "config");
  cfg.parallelism = get_field<int>(doc, "parallelism", cfg.parallelism, "config");
  const auto scoring = get_field<std::string>(doc, "scoring", "score-forest", "config");
  if (scoring == "score-forest") {
    cfg.scoring = ScoringMode::ScoreForest;
  } else if (scoring == "majority") {
    cfg.scoring = ScoringMode::Majority;
  } else {
    throw ConfigError("unknown scoring mode '" + scoring + "'");
  }
  validate(cfg);
  return cfg;
}

LoopConfig load_config(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document.begin(), document.end());
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return load_config_json(doc);
}

LoopConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return load_config(ss.str());
}

json to_json(const Strategy& s) {
  return json{{"id", s.id},
              {"kind", to_string(s.kind)},
              {"temperature", s.sampling.temperature},
              {"top_p", s.sampling.top_p},
              {"top_k", s.sampling.top_k},
              {"seed", s.sampling.seed},
              {"prompt_prefix", s.prompt_prefix}};
}

json to_json(const LoopConfig& cfg) {
  json rounds = json::array();
  for (const auto& r : cfg.rounds) {
    json strategies = json::array();
    for (const auto& s : r.strategies) strategies.push_back(to_json(s));
    rounds.push_back(json{{"n", r.n_paths},
                          {"tau", r.tau},
                          {"feedback", r.feedback_enabled},
                          {"dense_sampling", r.dense_sampling},
                          {"strategies", strategies}});
  }
  std::vector<double> weights(cfg.weights.data(), cfg.weights.data() + cfg.weights.size());
  return json{{"rounds", rounds},
              {"weights", weights},
              {"k_top", cfg.k_top},
              {"max_keyframes", cfg.max_keyframes},
              {"dense_radius", cfg.dense_radius},
              {"tie_break", cfg.tie_break},
              {"parallelism", cfg.parallelism},
              {"scoring", cfg.scoring == ScoringMode::Majority ? "majority" : "score-forest"}};
}

bool operator==(const RoundConfig& a, const RoundConfig& b) {
  return a.n_paths == b.n_paths && a.tau == b.tau && a.strategies == b.strategies &&
         a.feedback_enabled == b.feedback_enabled && a.dense_sampling == b.dense_sampling;
}

bool operator==(const LoopConfig& a, const LoopConfig& b) {
  return a.rounds == b.rounds && a.weights.size() == b.weights.size() &&
         a.weights == b.weights && a.k_top == b.k_top && a.max_keyframes == b.max_keyframes &&
         a.dense_radius == b.dense_radius && a.tie_break == b.tie_break &&
         a.parallelism == b.parallelism && a.scoring == b.scoring;
}

}  // namespace cyberv
