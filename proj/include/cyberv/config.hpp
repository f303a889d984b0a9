#pragma once

#include "cyberv/core.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string_view>

namespace cyberv {

// Defaults for an empty config document: an 8-path first round (one base and
// seven CoT variants, tau 0.3) followed by a single key-framed pass with tau 0.
inline constexpr int kDefaultFirstRoundPaths = 8;
inline constexpr double kDefaultFirstRoundTau = 0.3;
inline constexpr int kDefaultTopK = 5;
inline constexpr int kDefaultMaxKeyframes = 20;
inline constexpr int kDefaultParallelism = 8;

inline constexpr std::string_view kCotTrigger = "Thinking Process:";

/// One base strategy followed by n-1 CoT variants that differ only in seed.
std::vector<Strategy> default_first_round_strategies(int n);
/// n key-framed CoT strategies for a revision round.
std::vector<Strategy> default_revision_strategies(int n);

LoopConfig default_config();

/// Parses and validates a JSON config document. Missing fields take defaults.
LoopConfig load_config(std::string_view document);
LoopConfig load_config_json(const nlohmann::json& document);
LoopConfig load_config_file(const std::filesystem::path& path);

nlohmann::json to_json(const LoopConfig& cfg);
nlohmann::json to_json(const Strategy& s);

bool operator==(const RoundConfig& a, const RoundConfig& b);
bool operator==(const LoopConfig& a, const LoopConfig& b);

}  // namespace cyberv
