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

// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cstdio>
#include <functional>

#include "talklearn/learning.hpp"
#include "wire_harness.hpp"

using namespace talklearn;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;
};

Outcome fail(std::string why) { return {false, std::move(why)}; }

const TimelineEvent* first_of(const EventLog& log, EventKind kind, const std::string& utt) {
  for (const auto& e : log.events())
    if (e.kind == kind && e.utterance == utt) return &e;
  return nullptr;
}

Outcome soundness() {
  const auto tr = tltest::random_trace(2024, 100);
  const auto t0 = std::chrono::steady_clock::now();
  const auto log = simulate(tr, tltest::sim_config(2024));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::size_t checked = 0, violations = 0;
  for (const auto& e : log.events()) {
    if (e.kind != EventKind::SynthesizedVideo) continue;
    ++checked;
    const auto* media = first_of(log, EventKind::OriginalMedia, *e.utterance);
    const auto* done = first_of(log, EventKind::TranslatedText, *e.utterance);
    if (!done) done = first_of(log, EventKind::TranslationFailed, *e.utterance);
    if (!media || e.t_start < media->t_end || (done && e.t_start < done->t_end)) ++violations;
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "%zu segments, %zu violations, %.2f s", checked, violations, secs);
  return {violations == 0 && checked > 50 && secs < 5.0, buf};
}

Outcome stage_partition() {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto log = simulate(tltest::random_trace(seed + 1000, 40), tltest::sim_config(seed));
    const TimeMs end = log_session_end(log.view());
    const auto replayed = stage_intervals(log.view());
    if (replayed != tltest::logged_stages(log)) return fail("logged stages differ from replay, seed " + std::to_string(seed));
    for (const auto& [pid, ivs] : replayed) {
      TimeMs at = 0;
      for (const auto& iv : ivs) {
        if (iv.t_start != at || iv.t_end <= iv.t_start) return fail("gap or overlap, seed " + std::to_string(seed));
        at = iv.t_end;
      }
      if (at != end) return fail("coverage ends early, seed " + std::to_string(seed));
    }
  }
  return {true, "50 traces"};
}

Outcome determinism() {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto tr = tltest::random_trace(seed * 13, 40);
    if (serialize_log(simulate(tr, tltest::sim_config(seed))) != serialize_log(simulate(tr, tltest::sim_config(seed))))
      return fail("seed " + std::to_string(seed));
  }
  return {true, "10 seeds"};
}

Outcome completeness() {
  Trace tr;
  tr.session = "five";
  tr.participants = {Participant{"alice", "en", "fr", false}, Participant{"bob", "fr", "en", false}};
  tr.lexicon = tltest::lexicon();
  tr.utterances = {{"u1", "alice", 0, "hello world", true, false, 1000, {}},
                   {"u2", "bob", 5000, "bonjour monde", true, false, 1000, {}}};
  const auto log = simulate(tr, tltest::sim_config(1));
  std::string kinds;
  for (auto k : kConversationKinds)
    for (const char* u : {"u1", "u2"}) {
      const auto* e = first_of(log, k, u);
      if (!e || e->t_end < e->t_start) return fail(std::string(to_string(k)) + " missing for " + u);
    }
  for (auto k : kConversationKinds) kinds += std::string(kinds.empty() ? "" : ", ") + std::string(to_string(k));
  return {true, kinds};
}

Outcome metrics_oracle() {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto log = simulate(tltest::random_trace(seed + 500, 50), tltest::sim_config(seed));
    for (const char* p : {"alice", "bob"}) {
      const auto m = compute_metrics(log.view(), p);
      const auto r = tltest::recount(log, p);
      if (m.messages_sent != r.sent || m.untranslated_pct != tltest::tenth_percent(r.untranslated, r.sent) ||
          m.machine_pct != tltest::tenth_percent(r.machine, r.sent))
        return fail("seed " + std::to_string(seed) + " participant " + p);
    }
  }
  Trace tr;
  tr.session = "four";
  tr.participants = {Participant{"alice", "en", "fr", false}, Participant{"bob", "fr", "en", false}};
  tr.lexicon = tltest::lexicon();
  tr.utterances = {{"u1", "alice", 0, "hello world", true, false, 1000, {}},
                   {"u2", "alice", 6000, "the cat", true, false, 1000, {}},
                   {"u3", "alice", 12000, "bonjour", false, false, 1000, {}},
                   {"u4", "alice", 18000, "the dog", true, false, 1000, {}}};
  const auto m = compute_metrics(simulate(tr, tltest::sim_config(5)).view(), "alice");
  if (m.untranslated_pct != 25.0) return fail("4-message example gave " + std::to_string(m.untranslated_pct));
  return {true, "50 traces; 4-message example 25.0%"};
}

Outcome round_trip() {
  const auto& lex = tltest::lexicon();
  const auto en = tltest::words_of(lex, "en"), fr = tltest::words_of(lex, "fr");
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 1000; ++i) {
    const bool from_en = util::draw_chance(rng, 0.5);
    std::string s = tltest::random_sentence(rng, from_en ? en : fr, 0.0);
    for (auto& c : s)
      if (util::draw_chance(rng, 0.2)) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    const std::string a = from_en ? "en" : "fr", b = from_en ? "fr" : "en";
    if (translate(translate(s, a, b, lex), b, a, lex) != util::ascii_lower(s)) return fail("'" + s + "'");
  }
  return {true, "1000 sentences"};
}

Outcome grading() {
  static const std::vector<std::string> alphabet = {"a", "b", "c", " ", "é", "ß", "A", "o", "n"};
  std::mt19937_64 rng(643);
  auto random_string = [&] {
    std::string s;
    const auto n = util::draw_below(rng, 16);
    for (std::size_t i = 0; i < n; ++i) s += alphabet[util::draw_below(rng, alphabet.size())];
    return s;
  };
  for (int i = 0; i < 500; ++i) {
    const auto answer = random_string(), expected = random_string();
    LearningItem item;
    item.id = "i";
    item.native_text = "n";
    item.foreign_text = expected;
    const auto na = util::utf8_decode(normalize_answer(answer)), nb = util::utf8_decode(normalize_answer(expected));
    const auto longest = std::max(na.size(), nb.size());
    // an empty answer scores 0 regardless of the expected text
    const double want = na.empty() ? 0.0 : 1.0 - double(tltest::dp_levenshtein(na, nb)) / double(longest);
    if (grade_answer(item, answer).similarity != want) return fail("'" + answer + "' vs '" + expected + "'");
  }
  return {true, "500 pairs"};
}

Outcome learning_containment() {
  std::size_t prompts = 0;
  for (std::uint64_t seed = 1; seed <= 25; ++seed) {
    const auto log = simulate(tltest::random_trace(seed * 7, 40), tltest::sim_config(seed));
    const auto stages = stage_intervals(log.view());
    for (const auto& e : log.events()) {
      if (e.kind != EventKind::LearningItemShown) continue;
      ++prompts;
      for (const auto& iv : stages.at(e.participant))
        if ((iv.stage == Stage::Speaking || iv.stage == Stage::Viewing) &&
            tltest::overlaps(e.t_start, e.t_end, iv.t_start, iv.t_end))
          return fail("prompt overlaps " + std::string(to_string(iv.stage)) + ", seed " + std::to_string(seed));
    }
  }
  std::mt19937_64 rng(10'000);
  for (int s = 0; s < 10'000; ++s) {
    LearningItem item;
    item.id = "i";
    item.foreign_text = "x";
    const auto n = util::draw_between(rng, 1, 12);
    for (int k = 0; k < n; ++k) {
      item = update_box(item, util::draw_chance(rng, 0.6), k);
      if (item.box < kMinBox || item.box > kMaxBox) return fail("box " + std::to_string(item.box));
    }
  }
  return {prompts > 0, std::to_string(prompts) + " prompts; 10000 box sequences"};
}

Outcome log_round_trip() {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto log = simulate(tltest::random_trace(seed + 77, 30), tltest::sim_config(seed));
    const auto text = serialize_log(log);
    if (parse_log(text).events() != log.events()) return fail("seed " + std::to_string(seed));
  }
  auto text = serialize_log(simulate(tltest::random_trace(3, 5), tltest::sim_config(3)));
  std::size_t pos = 0;
  for (int i = 0; i < 4; ++i) pos = text.find('\n', pos) + 1;
  text.insert(pos, "{\"seq\":");
  try {
    parse_log(text);
    return fail("corrupt line accepted");
  } catch (const ParseError& e) {
    if (e.line != 5 || std::string(e.what()).find("line 5") == std::string::npos)
      return fail(std::string("wrong line: ") + e.what());
  }
  return {true, "20 logs; corrupt line 5 reported"};
}

Outcome wire_equivalence() {
  const auto tr = Trace::load(tltest::data_path("traces/story_market.json"));
  const auto sim = tltest::sim_config(42);
  const auto run = tltest::run_over_websocket(tr, sim);
  if (!run.completed) return fail("clients did not finish");
  if (run.log_text != serialize_log(simulate(tr, sim))) return fail("served log differs from simulation");
  if (!tltest::no_raw_media(run.clients)) return fail("raw media reference sent to a client");
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto rt = tltest::random_trace(seed + 300, 30);
    const auto rs = tltest::sim_config(seed);
    const auto in_process = tltest::run_in_process(rt, rs);
    if (!in_process.log || serialize_log(*in_process.log) != serialize_log(simulate(rt, rs)))
      return fail("in-process hub differs, seed " + std::to_string(seed));
    if (!tltest::no_raw_media(in_process.clients)) return fail("raw media reference, seed " + std::to_string(seed));
  }
  return {true, "story over WebSocket; 5 random traces in process"};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"Delay-Match soundness", soundness},
      {"Stage partition", stage_partition},
      {"Determinism", determinism},
      {"Five-kind completeness", completeness},
      {"Metrics oracle", metrics_oracle},
      {"Translation round trip", round_trip},
      {"Grading oracle", grading},
      {"Learning containment", learning_containment},
      {"Log round trip", log_round_trip},
      {"Wire equivalence", wire_equivalence},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = fail(std::string("exception: ") + e.what());
    }
    failed += !o.ok;
    std::printf("[%s] %s: %s\n", o.ok ? "PASS" : "FAIL", name, o.detail.c_str());
  }
  return failed == 0 ? 0 : 1;
}
