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

// Shared generators and brute-force oracles for the test suites.

#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "talklearn/config.hpp"
#include "talklearn/core_model.hpp"
#include "talklearn/simulate.hpp"
#include "talklearn/telemetry.hpp"
#include "talklearn/trace.hpp"
#include "talklearn/translation.hpp"

namespace tltest {

using namespace talklearn;

inline std::string data_path(const std::string& rel) { return std::string(TALKLEARN_DATA_DIR) + "/" + rel; }

inline const Lexicon& lexicon() {
  static const Lexicon lex = Lexicon::load(data_path("lexicon_en_fr.json"));
  return lex;
}

inline std::vector<std::string> words_of(const Lexicon& lex, const std::string& language) {
  std::vector<std::string> out;
  for (const auto& [k, _] : lex.vocabulary(language)) out.push_back(k);
  return out;
}

struct GenOptions {
  double p_translate = 0.7;
  double p_practice = 0.1;
  double p_energies = 0.1;
  double p_unknown = 0.1;
  double p_override = 0.05;
  double p_explicit_duration = 0.5;
};

inline std::string random_sentence(std::mt19937_64& rng, const std::vector<std::string>& vocab, double p_unknown) {
  const int n = static_cast<int>(util::draw_between(rng, 1, 7));
  std::vector<std::string> w;
  for (int i = 0; i < n; ++i) {
    if (util::draw_chance(rng, p_unknown))
      w.push_back("zq" + std::to_string(util::draw_below(rng, 100)));
    else
      w.push_back(vocab[util::draw_below(rng, vocab.size())]);
  }
  if (util::draw_chance(rng, 0.3)) w.back() += util::draw_chance(rng, 0.5) ? "?" : ".";
  return util::join(w, " ");
}

/// Random two-party trace over the shipped lexicon.
inline Trace random_trace(std::uint64_t seed, std::size_t n, const GenOptions& g = {}) {
  std::mt19937_64 rng(seed);
  Trace tr;
  tr.session = "rnd-" + std::to_string(seed);
  tr.participants = {Participant{"alice", "en", "fr", false}, Participant{"bob", "fr", "en", false}};
  tr.lexicon = lexicon();
  const auto en = words_of(tr.lexicon, "en");
  const auto fr = words_of(tr.lexicon, "fr");
  std::map<std::string, TimeMs> free_at;
  TimeMs clock = static_cast<TimeMs>(util::draw_between(rng, 0, 3000));
  for (std::size_t i = 0; i < n; ++i) {
    TraceUtterance u;
    u.id = "u" + std::to_string(i + 1);
    const auto& sp = tr.participants[util::draw_below(rng, 2)];
    u.speaker = sp.id;
    u.practice = util::draw_chance(rng, g.p_practice);
    u.translate = !u.practice && util::draw_chance(rng, g.p_translate);
    const auto& lang = u.translate ? sp.native_language : sp.foreign_language;
    u.text = random_sentence(rng, lang == "en" ? en : fr, g.p_unknown);
    u.t = std::max(clock, free_at[u.speaker]);
    TimeMs span = 0;
    if (util::draw_chance(rng, g.p_energies)) {
      const auto lead = util::draw_below(rng, 10);
      const auto voiced = 20 + util::draw_below(rng, 150);
      for (std::size_t k = 0; k < lead; ++k) u.frame_energies.push_back(0.01);
      for (std::size_t k = 0; k < voiced; ++k)
        u.frame_energies.push_back(util::draw_chance(rng, 0.9) ? 0.3 + 0.5 * util::draw_chance(rng, 0.5) : 0.05);
      for (int k = 0; k < 8; ++k) u.frame_energies.push_back(0.0);
      span = static_cast<TimeMs>(u.frame_energies.size()) * 20;
    } else if (util::draw_chance(rng, g.p_explicit_duration)) {
      u.duration_ms = util::draw_between(rng, 400, 5000);
      span = *u.duration_ms;
    } else {
      span = synthesize_speech(u.text, 60);
    }
    free_at[u.speaker] = u.t + span + util::draw_between(rng, 0, 500);
    clock += util::draw_between(rng, 200, 9000);
    tr.utterances.push_back(std::move(u));
    if (util::draw_chance(rng, g.p_override))
      tr.overrides.push_back({tr.participants[util::draw_below(rng, 2)].id, clock, util::draw_chance(rng, 0.5)});
  }
  std::stable_sort(tr.overrides.begin(), tr.overrides.end(),
                   [](const TraceOverride& a, const TraceOverride& b) { return a.t < b.t; });
  return tr;
}

inline SimulationConfig sim_config(std::uint64_t seed, const Config& c = {}) { return SimulationConfig::make(c, seed); }

// ---------------------------------------------------------------------------
// Oracles

/// Textbook full-matrix edit distance over code points.
inline std::size_t dp_levenshtein(const std::u32string& a, const std::u32string& b) {
  std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j)
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
  return d[a.size()][b.size()];
}

/// Nearest tenth of 100*num/den, halves rounded up, by exhaustive search.
inline double tenth_percent(std::int64_t num, std::int64_t den) {
  if (den == 0) return 0.0;
  std::int64_t best = 0;
  for (std::int64_t k = 0; k <= 1000; ++k) {
    // compare |k/10 - 100 num/den| scaled by 10*den
    const auto err = [&](std::int64_t x) { return std::llabs(x * den - 1000 * num); };
    if (err(k) < err(best) || (err(k) == err(best) && k > best)) best = k;
  }
  return static_cast<double>(best) / 10.0;
}

struct Recount {
  std::int64_t sent = 0, untranslated = 0, machine = 0;
};

/// Counts straight from raw events, without the metrics code.
inline Recount recount(const EventLog& log, const std::string& participant) {
  Recount r;
  std::set<std::string> sent;
  for (const auto& e : log.events()) {
    if (e.kind != EventKind::OriginalMedia || e.participant != participant) continue;
    if (e.payload.value("practice", false) || e.payload.value("interrupted", false)) continue;
    sent.insert(*e.utterance);
    ++r.sent;
    if (!e.payload.value("translate", true)) ++r.untranslated;
  }
  for (const auto& e : log.events())
    if (e.kind == EventKind::TranslatedText && e.utterance && sent.count(*e.utterance) &&
        e.payload.value("source", "") == std::string("Machine"))
      ++r.machine;
  return r;
}

/// Stage intervals as logged (StageChange events), merged when adjacent and equal.
inline std::map<std::string, std::vector<StageInterval>> logged_stages(const EventLog& log) {
  std::map<std::string, std::vector<StageInterval>> out;
  for (const auto& e : log.events()) {
    if (e.kind != EventKind::StageChange) continue;
    auto st = *stage_from_string(e.payload.at("stage").get<std::string>());
    auto& v = out[e.participant];
    if (!v.empty() && v.back().stage == st && v.back().t_end == e.t_start)
      v.back().t_end = e.t_end;
    else
      v.push_back({e.participant, st, e.t_start, e.t_end});
  }
  return out;
}

inline bool overlaps(TimeMs a0, TimeMs a1, TimeMs b0, TimeMs b1) { return a0 < b1 && b0 < a1; }

}  // namespace tltest
