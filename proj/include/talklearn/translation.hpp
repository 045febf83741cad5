/*
 * Copyright 2026 The talklearn Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>

#include "core_model.hpp"
#include "delay_match.hpp"
#include "errors.hpp"
#include "event.hpp"
#include "util.hpp"

namespace talklearn {

inline constexpr std::string_view kUnknownOpen = "⟦";   // ⟦
inline constexpr std::string_view kUnknownClose = "⟧";  // ⟧

/// Bijective word map between two languages. Lookups are case-insensitive
/// (ASCII) and results are lowercase.
class Lexicon {
 public:
  Lexicon() = default;

  Lexicon(std::string first_language, std::string second_language,
          const std::map<std::string, std::string>& entries)
      : first_(std::move(first_language)), second_(std::move(second_language)) {
    if (first_ == second_) throw ConfigError("lexicon languages must differ");
    for (const auto& [k, v] : entries) add(k, v);
  }

  /// Accepts either a plain object of word pairs (languages supplied by the
  /// caller) or {"languages": [a, b], "entries": {...}}.
  static Lexicon from_json(const Json& j, std::string first_language = {}, std::string second_language = {}) {
    const Json* entries = &j;
    if (j.contains("entries")) {
      entries = &j.at("entries");
      if (j.contains("languages")) {
        first_language = j.at("languages").at(0).get<std::string>();
        second_language = j.at("languages").at(1).get<std::string>();
      }
    }
    if (!entries->is_object()) throw ConfigError("lexicon must be a JSON object of word pairs");
    std::map<std::string, std::string> m;
    for (auto it = entries->begin(); it != entries->end(); ++it) {
      if (!it.value().is_string()) throw ConfigError("lexicon value for '" + it.key() + "' is not a string");
      m[it.key()] = it.value().get<std::string>();
    }
    return Lexicon(std::move(first_language), std::move(second_language), m);
  }

  static Lexicon load(const std::string& path, std::string first_language = {}, std::string second_language = {}) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open lexicon '" + path + "'");
    Json j;
    try {
      j = Json::parse(in);
    } catch (const Json::parse_error& e) {
      throw ConfigError("lexicon '" + path + "': " + e.what());
    }
    return from_json(j, std::move(first_language), std::move(second_language));
  }

  Json to_json() const {
    Json entries = Json::object();
    for (const auto& [k, v] : forward_) entries[k] = v;
    return Json{{"languages", {first_, second_}}, {"entries", entries}};
  }

  const std::string& first_language() const { return first_; }
  const std::string& second_language() const { return second_; }
  std::size_t size() const { return forward_.size(); }
  const std::map<std::string, std::string>& forward() const { return forward_; }
  const std::map<std::string, std::string>& backward() const { return backward_; }

  bool supports(std::string_view src, std::string_view dst) const {
    return (src == first_ && dst == second_) || (src == second_ && dst == first_);
  }

  /// Word map for src -> dst; TranslationError for an unsupported pair.
  const std::map<std::string, std::string>& direction(std::string_view src, std::string_view dst) const {
    if (src == first_ && dst == second_) return forward_;
    if (src == second_ && dst == first_) return backward_;
    throw TranslationError("unsupported language pair " + std::string(src) + "->" + std::string(dst));
  }

  /// Vocabulary of one language (keys of the map out of that language).
  const std::map<std::string, std::string>& vocabulary(std::string_view language) const {
    if (language == first_) return forward_;
    if (language == second_) return backward_;
    throw TranslationError("lexicon has no language '" + std::string(language) + "'");
  }

 private:
  void add(const std::string& k, const std::string& v) {
    const auto key = util::ascii_lower(k);
    const auto val = util::ascii_lower(v);
    if (key.empty() || val.empty()) throw ConfigError("lexicon entries must be nonempty");
    if (util::split_whitespace(key).size() != 1 || util::split_whitespace(val).size() != 1)
      throw ConfigError("lexicon entries must be single words: '" + k + "' -> '" + v + "'");
    if (forward_.contains(key)) throw ConfigError("duplicate lexicon key '" + key + "'");
    if (backward_.contains(val)) throw ConfigError("lexicon is not a bijection: '" + val + "' has two preimages");
    forward_[key] = val;
    backward_[val] = key;
  }

  std::string first_;
  std::string second_;
  std::map<std::string, std::string> forward_;
  std::map<std::string, std::string> backward_;
};

namespace detail {

inline bool is_punct(char c) {
  return (c >= '!' && c <= '/') || (c >= ':' && c <= '@') || (c >= '[' && c <= '`') || (c >= '{' && c <= '~');
}

struct Token {
  std::string lead;
  std::string core;
  std::string trail;
};

inline Token split_token(const std::string& tok) {
  std::size_t a = 0, b = tok.size();
  while (a < b && is_punct(tok[a])) ++a;
  while (b > a && is_punct(tok[b - 1])) --b;
  return {tok.substr(0, a), tok.substr(a, b - a), tok.substr(b)};
}

}  // namespace detail

/// Mock speech recognition: the ground-truth transcript, verbatim.
inline std::string transcribe(const Utterance& utterance) { return utterance.text; }

/// Word-by-word translation. Punctuation stays attached to its token;
/// words missing from the lexicon are emitted as ⟦word⟧.
inline std::string translate(std::string_view text, std::string_view src, std::string_view dst,
                             const Lexicon& lexicon) {
  const auto& map = lexicon.direction(src, dst);
  std::vector<std::string> out;
  for (const auto& tok : util::split_whitespace(text)) {
    auto t = detail::split_token(tok);
    if (t.core.empty()) {
      out.push_back(tok);
      continue;
    }
    auto it = map.find(util::ascii_lower(t.core));
    if (it != map.end())
      out.push_back(t.lead + it->second + t.trail);
    else
      out.push_back(t.lead + std::string(kUnknownOpen) + t.core + std::string(kUnknownClose) + t.trail);
  }
  return util::join(out, " ");
}

/// True when every word of `text` is in the lexicon's vocabulary for `language`.
inline bool lexicon_covers(std::string_view text, std::string_view language, const Lexicon& lexicon) {
  if (lexicon.first_language() != language && lexicon.second_language() != language) return false;
  const auto& vocab = lexicon.vocabulary(language);
  bool any = false;
  for (const auto& tok : util::split_whitespace(text)) {
    auto t = detail::split_token(tok);
    if (t.core.empty()) continue;
    if (!vocab.contains(util::ascii_lower(t.core))) return false;
    any = true;
  }
  return any;
}

inline constexpr TimeMs kMinSpeechMs = 200;

/// Mock text-to-speech: duration proportional to the visible character count.
inline TimeMs synthesize_speech(std::string_view text, double rate_ms_per_char) {
  if (text.empty()) throw TranslationError("cannot synthesize speech for empty text");
  if (!(rate_ms_per_char > 0)) throw TranslationError("speech rate must be positive");
  std::size_t chars = util::utf8_length(text);
  for (std::size_t pos = 0; (pos = text.find(kUnknownOpen, pos)) != std::string_view::npos; pos += kUnknownOpen.size())
    --chars;
  for (std::size_t pos = 0; (pos = text.find(kUnknownClose, pos)) != std::string_view::npos;
       pos += kUnknownClose.size())
    --chars;
  const auto ms = static_cast<TimeMs>(std::llround(static_cast<double>(chars) * rate_ms_per_char));
  return std::max(kMinSpeechMs, ms);
}

struct LatencyModel {
  TimeMs base_ms = 500;
  TimeMs per_char_ms = 20;
  /// Uniform jitter in [-jitter_ms, +jitter_ms]; 0 disables it.
  TimeMs jitter_ms = 100;
};

/// Pipeline delay for `text`. Consumes one draw from `rng` when jitter is on.
inline TimeMs latency(const LatencyModel& model, std::string_view text, std::mt19937_64& rng) {
  TimeMs d = model.base_ms + model.per_char_ms * static_cast<TimeMs>(util::utf8_length(text));
  if (model.jitter_ms > 0) d += util::draw_between(rng, -model.jitter_ms, model.jitter_ms);
  return std::max<TimeMs>(0, d);
}

/// What the engine asks a backend to do for one captured utterance.
struct TranslationJob {
  Utterance utterance;
  std::string src;
  std::string dst;
  TimeMs t_requested = 0;
};

struct TranslationFailure {
  std::string utterance_id;
  std::string reason;
  int attempts = 0;
  TimeMs t_requested = 0;
  TimeMs t_failed = 0;
};

using TranslationOutcome = std::variant<TranslationResult, TranslationFailure>;

/// Deterministic lexicon translator with a seeded latency model. Latency
/// draws are consumed in dispatch order.
class MockTranslator {
 public:
  MockTranslator(Lexicon lexicon, LatencyModel model, double speech_rate_ms_per_char, std::uint64_t seed)
      : lexicon_(std::move(lexicon)), model_(model), rate_(speech_rate_ms_per_char),
        rng_(util::mix_seed(seed, "latency")) {}

  TranslationOutcome operator()(const TranslationJob& job) {
    TranslationResult r;
    r.utterance_id = job.utterance.id;
    r.transcribed_text = transcribe(job.utterance);
    r.translated_text = translate(r.transcribed_text, job.src, job.dst, lexicon_);
    r.speech_duration_ms = synthesize_speech(r.translated_text, rate_);
    r.source = TranslationSource::Machine;
    r.t_requested = job.t_requested;
    r.t_completed = job.t_requested + latency(model_, r.transcribed_text, rng_);
    return r;
  }

  const Lexicon& lexicon() const { return lexicon_; }

 private:
  Lexicon lexicon_;
  LatencyModel model_;
  double rate_;
  std::mt19937_64 rng_;
};

}  // namespace talklearn
