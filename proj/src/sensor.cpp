#include "cyberv/sensor.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>
#include <unordered_map>

namespace cyberv {

namespace {

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), lower);
  return out;
}

std::size_t skip_spaces(std::string_view t, std::size_t i) {
  while (i < t.size() && std::isspace(static_cast<unsigned char>(t[i]))) ++i;
  return i;
}

bool starts_with_ci(std::string_view t, std::size_t i, std::string_view word) {
  if (i + word.size() > t.size()) return false;
  for (std::size_t k = 0; k < word.size(); ++k)
    if (lower(t[i + k]) != word[k]) return false;
  return true;
}

// Longest label that starts at `i` and ends on a word boundary.
std::optional<std::size_t> label_at(std::string_view t, std::size_t i, const ChoiceSet& choices) {
  std::optional<std::size_t> best;
  for (std::size_t c = 0; c < choices.labels.size(); ++c) {
    const auto& l = choices.labels[c];
    if (t.substr(i, l.size()) != l) continue;
    const std::size_t end = i + l.size();
    if (end < t.size() && is_word_char(t[end]) && is_word_char(l.back())) continue;
    if (!best || l.size() > choices.labels[*best].size()) best = c;
  }
  return best;
}

// Label after an optional run of decoration: spaces, '*', '(' or '['.
std::optional<std::size_t> decorated_label_at(std::string_view t, std::size_t i,
                                              const ChoiceSet& choices) {
  while (i < t.size() && (std::isspace(static_cast<unsigned char>(t[i])) || t[i] == '*' ||
                          t[i] == '(' || t[i] == '['))
    ++i;
  if (i >= t.size()) return std::nullopt;
  return label_at(t, i, choices);
}

// "answer is X", "answer: X", "answer is option (X)"; last occurrence wins.
std::optional<std::size_t> match_answer_keyword(std::string_view t, const ChoiceSet& choices) {
  std::optional<std::size_t> found;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!starts_with_ci(t, i, "answer")) continue;
    if (i > 0 && is_word_char(t[i - 1])) continue;
    std::size_t j = i + 6;
    while (j < t.size() && (t[j] == '*' || t[j] == ')')) ++j;
    j = skip_spaces(t, j);
    bool linked = false;
    if (starts_with_ci(t, j, "is") && (j + 2 >= t.size() || !is_word_char(t[j + 2]))) {
      j = skip_spaces(t, j + 2);
      linked = true;
    }
    if (j < t.size() && t[j] == ':') {
      j = skip_spaces(t, j + 1);
      linked = true;
    }
    if (!linked) continue;
    for (std::string_view w : {"option", "choice"}) {
      if (starts_with_ci(t, j, w)) {
        j = skip_spaces(t, j + w.size());
        break;
      }
    }
    if (auto c = decorated_label_at(t, j, choices)) found = c;
  }
  return found;
}

// "(X)" or "option X" / "choice X"; last occurrence wins.
std::optional<std::size_t> match_option_reference(std::string_view t, const ChoiceSet& choices) {
  std::optional<std::size_t> found;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] == '(') {
      if (auto c = label_at(t, i + 1, choices)) {
        const std::size_t end = i + 1 + choices.labels[*c].size();
        if (end < t.size() && t[end] == ')') found = c;
      }
      continue;
    }
    for (std::string_view w : {"option", "choice"}) {
      if (!starts_with_ci(t, i, w)) continue;
      if (i > 0 && is_word_char(t[i - 1])) continue;
      const std::size_t j = i + w.size();
      if (j >= t.size() || !std::isspace(static_cast<unsigned char>(t[j]))) continue;
      if (auto c = decorated_label_at(t, j, choices)) found = c;
    }
  }
  return found;
}

std::optional<std::size_t> match_trailing_label(std::string_view t, const ChoiceSet& choices) {
  std::size_t end = t.size();
  while (end > 0 && std::isspace(static_cast<unsigned char>(t[end - 1]))) --end;
  std::size_t begin = end;
  while (begin > 0 && !std::isspace(static_cast<unsigned char>(t[begin - 1]))) --begin;
  std::string_view token = t.substr(begin, end - begin);
  constexpr std::string_view kDecoration = "()[].,:;!?*'\"`";
  while (!token.empty() && kDecoration.find(token.front()) != std::string_view::npos)
    token.remove_prefix(1);
  while (!token.empty() && kDecoration.find(token.back()) != std::string_view::npos)
    token.remove_suffix(1);
  if (token.empty()) return std::nullopt;
  return choices.index_of(std::string(token));
}

std::optional<std::size_t> match_choice_text(std::string_view t, const ChoiceSet& choices) {
  if (!choices.has_texts()) return std::nullopt;
  const std::string hay = to_lower(t);
  std::optional<std::size_t> found;
  for (std::size_t c = 0; c < choices.texts.size(); ++c) {
    const std::string needle = to_lower(choices.texts[c]);
    if (needle.empty() || hay.find(needle) == std::string::npos) continue;
    if (found) return std::nullopt;
    found = c;
  }
  return found;
}

}  // namespace

std::optional<std::string> parse_prediction(std::string_view text, const ChoiceSet& choices) {
  std::optional<std::size_t> hit = match_answer_keyword(text, choices);
  if (!hit) hit = match_option_reference(text, choices);
  if (!hit) hit = match_trailing_label(text, choices);
  if (!hit) hit = match_choice_text(text, choices);
  if (!hit) return std::nullopt;
  return choices.labels[*hit];
}

bool detect_repetition(std::string_view text, RepetitionRule rule) {
  if (rule.ngram < 1 || rule.min_count < 1) return false;
  std::vector<std::string> tokens;
  std::istringstream in{std::string(text)};
  for (std::string tok; in >> tok;) tokens.push_back(std::move(tok));
  const auto n = static_cast<std::size_t>(rule.ngram);
  if (tokens.size() < n) return false;
  std::unordered_map<std::string, int> counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key;
    for (std::size_t k = 0; k < n; ++k) {
      key += tokens[i + k];
      key += '\x1f';
    }
    if (++counts[key] >= rule.min_count) return true;
  }
  return false;
}

double extract_confidence(const ResponseRecord& r) {
  if (!r.parsed) return 0.0;
  auto it = r.answer_token_logprobs.find(*r.parsed);
  if (it == r.answer_token_logprobs.end() || !std::isfinite(it->second)) return 0.0;
  return std::clamp(std::exp(it->second), 0.0, 1.0);
}

SignalBundle collect_signals(const std::vector<ResponseRecord>& responses, RepetitionRule rule) {
  SignalBundle bundle;
  bundle.responses.reserve(responses.size());
  for (std::size_t i = 0; i < responses.size(); ++i) {
    const auto& r = responses[i];
    if (r.kind == StrategyKind::Base) {
      if (bundle.base_index) throw ValidationError("a round may hold at most one base response");
      bundle.base_index = i;
    }
    ResponseSignals s;
    s.parsed = r.parsed;
    s.confidence = extract_confidence(r);
    s.repetition = detect_repetition(r.text, rule);
    s.has_attention = r.attention.has_value();
    bundle.responses.push_back(std::move(s));
  }

  if (!bundle.base_index) return bundle;
  const auto& base = responses[*bundle.base_index];
  if (!base.attention) return bundle;
  const AttentionProfile& base_att = *base.attention;
  const double base_mass = base_att.mean_video_mass();

  std::optional<std::size_t> anchor;
  for (std::size_t i = 0; i < responses.size(); ++i) {
    const auto& r = responses[i];
    if (i == *bundle.base_index || !r.attention) continue;
    if (base_mass > 0.0)
      bundle.responses[i].retention =
          std::clamp(r.attention->mean_video_mass() / base_mass, 0.0, 1.0);
    const bool same_shape = r.attention->heads() == base_att.heads() &&
                            r.attention->k1() == base_att.k1() &&
                            r.attention->k2() == base_att.k2();
    if (!r.is_cot() || !same_shape) continue;
    if (!anchor || bundle.responses[i].confidence > bundle.responses[*anchor].confidence)
      anchor = i;
  }
  if (anchor) {
    DriftSignal d = compute_attention_drift(base_att, *responses[*anchor].attention);
    d.base_strategy_id = base.strategy_id;
    d.cot_strategy_id = responses[*anchor].strategy_id;
    bundle.drift = std::move(d);
  }
  return bundle;
}

}  // namespace cyberv
