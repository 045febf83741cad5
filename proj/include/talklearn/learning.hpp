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

#include <algorithm>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "core_model.hpp"
#include "delay_match.hpp"
#include "errors.hpp"
#include "event.hpp"
#include "translation.hpp"
#include "util.hpp"

namespace talklearn {

enum class Direction { Received, Sent };
enum class PromptKind { Review, Retell, Recognize };

inline std::string_view to_string(Direction d) { return d == Direction::Received ? "Received" : "Sent"; }

inline std::string_view to_string(PromptKind k) {
  switch (k) {
    case PromptKind::Review: return "Review";
    case PromptKind::Retell: return "Retell";
    case PromptKind::Recognize: return "Recognize";
  }
  return "?";
}

inline constexpr int kMinBox = 1;
inline constexpr int kMaxBox = 5;

struct LearningItem {
  std::string id;
  std::string source_utterance_id;
  Direction direction = Direction::Received;
  PromptKind prompt_kind = PromptKind::Review;
  std::string native_text;
  std::string foreign_text;
  int box = kMinBox;
  TimeMs due_at = 0;
  std::vector<std::pair<TimeMs, bool>> history;

  bool operator==(const LearningItem&) const = default;
};

/// Lowercase (ASCII), trim, and collapse whitespace runs to one space.
inline std::string normalize_answer(std::string_view s) { return util::join(util::split_whitespace(util::ascii_lower(s)), " "); }

/// Item for a message the participant got: its original text is foreign to
/// them, the translation native.
inline LearningItem make_received_item(const std::string& participant, const std::string& utterance_id,
                                       std::string original, std::string translated, TimeMs available_at) {
  return LearningItem{participant + ":" + utterance_id, utterance_id, Direction::Received, PromptKind::Review,
                      std::move(translated), std::move(original), kMinBox, available_at, {}};
}

/// Item for a message the participant sent: their text is native, its
/// translation foreign.
inline LearningItem make_sent_item(const std::string& participant, const std::string& utterance_id,
                                   std::string original, std::string translated, TimeMs available_at) {
  return LearningItem{participant + ":" + utterance_id, utterance_id, Direction::Sent, PromptKind::Review,
                      std::move(original), std::move(translated), kMinBox, available_at, {}};
}

/// Bilingual review items for `participant`, in order of availability. Sent
/// items appear when the translation completes, received items when the
/// synthesized segment has been presented. Items are unique by normalized
/// foreign text; the partner's practice utterances never yield items.
inline std::vector<LearningItem> harvest_items(std::span<const TimelineEvent> log, const std::string& participant) {
  std::map<std::string, std::string> transcript;
  std::map<std::string, bool> practice;
  std::map<std::string, std::pair<std::string, std::string>> translation;  // utt -> (speaker, text)
  std::vector<LearningItem> out;
  std::set<std::string> seen;
  auto offer = [&](LearningItem item) {
    if (seen.insert(normalize_answer(item.foreign_text)).second) out.push_back(std::move(item));
  };
  for (const auto& e : log) {
    if (!e.utterance) continue;
    const auto& utt = *e.utterance;
    switch (e.kind) {
      case EventKind::OriginalMedia: practice[utt] = payload_flag(e.payload, "practice"); break;
      case EventKind::TranscribedText: transcript[utt] = e.payload.value("text", std::string{}); break;
      case EventKind::TranslatedText:
        if (e.payload.value("source", std::string{}) != "Machine") break;
        translation[utt] = {e.participant, e.payload.value("text", std::string{})};
        if (e.participant == participant && transcript.contains(utt))
          offer(make_sent_item(participant, utt, transcript[utt], translation[utt].second, e.t_end));
        break;
      case EventKind::SynthesizedVideo: {
        if (e.participant != participant || practice[utt] || payload_flag(e.payload, "interrupted")) break;
        auto it = translation.find(utt);
        if (it == translation.end() || it->second.first == participant || !transcript.contains(utt)) break;
        offer(make_received_item(participant, utt, transcript[utt], it->second.second, e.t_end));
        break;
      }
      default: break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scheduling and grading

struct PickParams {
  double speech_rate_ms_per_char = 60;
  TimeMs answer_allowance_ms = 2000;
};

inline TimeMs exercise_ms(const LearningItem& item, const PickParams& p) {
  return synthesize_speech(item.foreign_text, p.speech_rate_ms_per_char) + p.answer_allowance_ms;
}

inline bool queue_order(const LearningItem& a, const LearningItem& b) {
  return std::tie(a.due_at, a.box, a.id) < std::tie(b.due_at, b.box, b.id);
}

/// Index of the earliest-due item (lower box first on ties) whose exercise
/// fits in what remains of `window` at `now`.
inline std::optional<std::size_t> pick_item(std::span<const LearningItem> queue, const FreeWindow& window, TimeMs now,
                                            const PickParams& params = {}) {
  const TimeMs remaining = window.t_end - std::max(now, window.t_start);
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < queue.size(); ++i) {
    const auto& item = queue[i];
    if (item.due_at > now || exercise_ms(item, params) > remaining) continue;
    if (!best || queue_order(item, queue[*best])) best = i;
  }
  return best;
}

inline std::size_t levenshtein(std::u32string_view a, std::u32string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

/// 1 - edit distance / longer length, over normalized code points. Two empty
/// strings are identical (1.0).
inline double similarity(std::string_view a, std::string_view b) {
  const auto na = util::utf8_decode(normalize_answer(a));
  const auto nb = util::utf8_decode(normalize_answer(b));
  const std::size_t longest = std::max(na.size(), nb.size());
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(levenshtein(na, nb)) / static_cast<double>(longest);
}

inline constexpr double kCorrectThreshold = 0.8;

struct Grade {
  double similarity = 0;
  bool correct = false;
};

inline Grade grade_text(std::string_view answer, std::string_view expected, double threshold = kCorrectThreshold) {
  if (normalize_answer(answer).empty()) return {0.0, false};
  const double s = similarity(answer, expected);
  return {s, s >= threshold};
}

inline Grade grade_answer(const LearningItem& item, std::string_view answer, double threshold = kCorrectThreshold) {
  return grade_text(answer, item.foreign_text, threshold);
}

/// Leitner review interval for a box.
inline TimeMs box_interval_ms(int box) {
  switch (box) {
    case 1: return 60'000;
    case 2: return 5 * 60'000;
    case 3: return 30 * 60'000;
    case 4: return 2 * 3'600'000;
    default: return 24 * 3'600'000;
  }
}

inline LearningItem update_box(LearningItem item, bool correct, TimeMs now) {
  item.box = correct ? std::min(item.box + 1, kMaxBox) : kMinBox;
  item.due_at = now + box_interval_ms(item.box);
  item.history.emplace_back(now, correct);
  return item;
}

/// Item whose foreign text is closest to `text`; ties go to the earlier item.
inline std::optional<std::pair<std::size_t, double>> best_match(std::span<const LearningItem> items,
                                                                std::string_view text) {
  std::optional<std::pair<std::size_t, double>> best;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const double s = similarity(text, items[i].foreign_text);
    if (!best || s > best->second) best = {{i, s}};
  }
  return best;
}

// ---------------------------------------------------------------------------
// Post-session language test

struct TestItem {
  PromptKind kind = PromptKind::Retell;
  std::string source_utterance_id;
  std::string native_text;
  std::string foreign_text;
  std::string expected;
  std::vector<std::string> choices;
};

struct LanguageTest {
  std::string id;
  std::string participant;
  std::uint64_t seed = 0;
  std::vector<TestItem> items;
};

struct ItemScore {
  PromptKind kind = PromptKind::Retell;
  double similarity = 0;
  bool correct = false;
};

struct TestResult {
  std::string test_id;
  std::string participant;
  std::int64_t n_retold = 0;
  std::int64_t n_recognized = 0;
  std::vector<ItemScore> per_item;
};

inline constexpr std::size_t kRecognizeChoices = 4;

/// Deterministic test drawn from the conversation: items alternate Retell and
/// Recognize; Recognize distractors are other foreign sentences of the log.
inline LanguageTest build_language_test(std::span<const TimelineEvent> log, std::string participant,
                                        std::size_t n_items, std::uint64_t seed,
                                        std::size_t n_choices = kRecognizeChoices) {
  if (n_items == 0) throw LearningError("a test needs at least one item");
  if (participant.empty()) {
    auto people = log_participants(log);
    if (people.empty()) throw LearningError("insufficient material: log has no participants");
    participant = people.front();
  }
  std::map<std::string, std::string> transcript;
  std::map<std::string, bool> practice, translate;
  struct Pair {
    std::string utt, native, foreign;
  };
  std::vector<Pair> pairs;
  std::vector<std::string> foreign_pool;
  std::set<std::string> seen_pair, seen_foreign;
  auto add_foreign = [&](const std::string& s) {
    if (seen_foreign.insert(normalize_answer(s)).second) foreign_pool.push_back(s);
  };
  for (const auto& e : log) {
    if (!e.utterance) continue;
    const auto& utt = *e.utterance;
    if (e.kind == EventKind::OriginalMedia) {
      practice[utt] = payload_flag(e.payload, "practice");
      translate[utt] = payload_flag(e.payload, "translate");
    } else if (e.kind == EventKind::TranscribedText) {
      transcript[utt] = e.payload.value("text", std::string{});
      if (e.participant == participant && !translate[utt] && !practice[utt]) add_foreign(transcript[utt]);
    } else if (e.kind == EventKind::TranslatedText && e.payload.value("source", std::string{}) == "Machine") {
      const auto text = e.payload.value("text", std::string{});
      const bool own = e.participant == participant;
      if (!own && practice[utt]) continue;
      Pair p{utt, own ? transcript[utt] : text, own ? text : transcript[utt]};
      add_foreign(p.foreign);
      if (seen_pair.insert(normalize_answer(p.foreign)).second) pairs.push_back(std::move(p));
    }
  }
  if (pairs.size() < n_items)
    throw LearningError("insufficient material: " + std::to_string(pairs.size()) + " translated sentences for " +
                        std::to_string(n_items) + " items");
  if (n_items >= 2 && foreign_pool.size() < n_choices)
    throw LearningError("insufficient material: need " + std::to_string(n_choices) +
                        " distinct sentences for recognition choices");

  std::mt19937_64 rng(util::mix_seed(seed, "language-test"));
  auto shuffle = [&](auto& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[util::draw_below(rng, i)]);
  };
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  shuffle(order);

  LanguageTest test;
  test.participant = participant;
  test.seed = seed;
  const std::string session = log.empty() ? std::string{} : log.front().session;
  test.id = "test-" + session + "-" + participant + "-" + std::to_string(seed) + "-" + std::to_string(n_items);
  for (std::size_t k = 0; k < n_items; ++k) {
    const auto& p = pairs[order[k]];
    TestItem item;
    item.kind = k % 2 == 0 ? PromptKind::Retell : PromptKind::Recognize;
    item.source_utterance_id = p.utt;
    item.native_text = p.native;
    item.foreign_text = p.foreign;
    item.expected = p.foreign;
    if (item.kind == PromptKind::Recognize) {
      std::vector<std::string> others;
      for (const auto& s : foreign_pool)
        if (normalize_answer(s) != normalize_answer(p.foreign)) others.push_back(s);
      shuffle(others);
      item.choices.push_back(p.foreign);
      for (std::size_t c = 0; c + 1 < n_choices && c < others.size(); ++c) item.choices.push_back(others[c]);
      shuffle(item.choices);
    }
    test.items.push_back(std::move(item));
  }
  return test;
}

/// Missing answers count as incorrect.
inline TestResult score_test(const LanguageTest& test, std::span<const std::optional<std::string>> answers,
                             double threshold = kCorrectThreshold) {
  TestResult r;
  r.test_id = test.id;
  r.participant = test.participant;
  for (std::size_t i = 0; i < test.items.size(); ++i) {
    const auto& item = test.items[i];
    const std::optional<std::string> answer = i < answers.size() ? answers[i] : std::nullopt;
    ItemScore s;
    s.kind = item.kind;
    if (answer) {
      if (item.kind == PromptKind::Retell) {
        auto g = grade_text(*answer, item.expected, threshold);
        s.similarity = g.similarity;
        s.correct = g.correct;
      } else {
        s.correct = normalize_answer(*answer) == normalize_answer(item.expected);
        s.similarity = s.correct ? 1.0 : 0.0;
      }
    }
    if (s.correct) ++(item.kind == PromptKind::Retell ? r.n_retold : r.n_recognized);
    r.per_item.push_back(s);
  }
  return r;
}

inline Json test_to_json(const LanguageTest& t) {
  Json items = Json::array();
  for (const auto& it : t.items) {
    Json j;
    j["kind"] = std::string(to_string(it.kind));
    j["utt"] = it.source_utterance_id;
    j["native_text"] = it.native_text;
    j["foreign_text"] = it.foreign_text;
    j["expected"] = it.expected;
    j["choices"] = it.choices;
    items.push_back(std::move(j));
  }
  Json j;
  j["id"] = t.id;
  j["participant"] = t.participant;
  j["seed"] = t.seed;
  j["items"] = std::move(items);
  return j;
}

/// Accepts {"answers": [...]} or a bare array. Entries may be strings, null,
/// or (for Recognize items) a choice index.
inline std::vector<std::optional<std::string>> answers_from_json(const Json& j, const LanguageTest& test) {
  const Json& arr = j.is_array() ? j : j.at("answers");
  if (!arr.is_array()) throw ParseError(0, "answers must be an array");
  std::vector<std::optional<std::string>> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const auto& a = arr[i];
    if (a.is_string()) {
      out.emplace_back(a.get<std::string>());
    } else if (a.is_number_integer() && i < test.items.size() && !test.items[i].choices.empty()) {
      const auto idx = a.get<std::int64_t>();
      if (idx >= 0 && static_cast<std::size_t>(idx) < test.items[i].choices.size())
        out.emplace_back(test.items[i].choices[static_cast<std::size_t>(idx)]);
      else
        out.emplace_back(std::nullopt);
    } else {
      out.emplace_back(std::nullopt);
    }
  }
  return out;
}

inline Json result_to_json(const TestResult& r) {
  Json items = Json::array();
  for (const auto& s : r.per_item)
    items.push_back(Json{{"kind", std::string(to_string(s.kind))}, {"similarity", s.similarity}, {"correct", s.correct}});
  Json j;
  j["test_id"] = r.test_id;
  j["participant"] = r.participant;
  j["n_retold"] = r.n_retold;
  j["n_recognized"] = r.n_recognized;
  j["per_item"] = std::move(items);
  return j;
}

}  // namespace talklearn
