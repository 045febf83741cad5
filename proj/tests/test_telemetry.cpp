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

#include <gtest/gtest.h>

#include "support.hpp"
#include "talklearn/report.hpp"

using namespace talklearn;

namespace {

TimelineEvent ev(EventKind kind, std::string who, std::optional<std::string> utt, TimeMs a, TimeMs b,
                 Json payload = Json::object()) {
  TimelineEvent e;
  e.kind = kind;
  e.participant = std::move(who);
  e.utterance = std::move(utt);
  e.t_start = a;
  e.t_end = b;
  e.payload = std::move(payload);
  return e;
}

Trace four_message_trace() {
  Trace tr;
  tr.session = "four";
  tr.participants = {Participant{"alice", "en", "fr", false}, Participant{"bob", "fr", "en", false}};
  tr.lexicon = tltest::lexicon();
  tr.utterances = {
      {"u1", "alice", 0, "hello world", true, false, 1000, {}},
      {"u2", "alice", 6000, "the cat", true, false, 1000, {}},
      {"u3", "alice", 12000, "bonjour", false, false, 1000, {}},
      {"u4", "alice", 18000, "the dog", true, false, 1000, {}},
      {"p1", "alice", 24000, "le chat", false, true, 1000, {}},
  };
  return tr;
}

}  // namespace

TEST(AppendEvent, NumbersFromOne) {
  EventLog log("s");
  EXPECT_EQ(append_event(log, ev(EventKind::StageChange, "a", std::nullopt, 0, 10, {{"stage", "Idle"}})), 1u);
  EXPECT_EQ(log.events()[0].session, "s");
}

TEST(AppendEvent, ThousandAppendsWithoutGaps) {
  EventLog log("s");
  for (int i = 0; i < 1000; ++i) append_event(log, ev(EventKind::TranscribedText, "a", "u", i, i + 1));
  for (std::size_t i = 0; i < log.size(); ++i) ASSERT_EQ(log.events()[i].seq, i + 1);
}

TEST(AppendEvent, RejectsAfterCloseAndInvertedIntervals) {
  EventLog log("s");
  EXPECT_THROW(append_event(log, ev(EventKind::TranscribedText, "a", "u", 10, 5)), LogError);
  append_event(log, ev(EventKind::SessionClosed, "", std::nullopt, 100, 100));
  EXPECT_TRUE(log.closed());
  EXPECT_THROW(append_event(log, ev(EventKind::TranscribedText, "a", "u", 0, 5)), LogError);
}

TEST(Serialize, EmptyLogIsEmptyFile) {
  EXPECT_EQ(serialize_log(EventLog("s")), "");
  EXPECT_TRUE(parse_log("").empty());
}

TEST(Serialize, FixedKeyOrder) {
  EventLog log("s");
  append_event(log, ev(EventKind::TranslatedText, "alice", "u1", 10, 20, {{"text", "bonjour ⟦x⟧"}, {"source", "Machine"}}));
  EXPECT_EQ(serialize_log(log),
            "{\"seq\":1,\"session\":\"s\",\"kind\":\"TranslatedText\",\"participant\":\"alice\",\"utt\":\"u1\","
            "\"t_start\":10,\"t_end\":20,\"payload\":{\"text\":\"bonjour ⟦x⟧\",\"source\":\"Machine\"}}\n");
}

TEST(Serialize, RoundTripOfLargeSimulatedLog) {
  const auto log = simulate(tltest::random_trace(100, 100), tltest::sim_config(100));
  const auto text = serialize_log(log);
  const auto back = parse_log(text);
  EXPECT_EQ(back.events(), log.events());
  EXPECT_EQ(back.session_id(), log.session_id());
  EXPECT_TRUE(back.closed());
  EXPECT_EQ(serialize_log(back), text);
}

TEST(Serialize, UnknownKindNamesLine) {
  const auto log = simulate(tltest::random_trace(3, 5), tltest::sim_config(3));
  auto text = serialize_log(log);
  // corrupt the kind on line 3
  std::size_t pos = 0;
  for (int i = 0; i < 2; ++i) pos = text.find('\n', pos) + 1;
  const auto k = text.find("\"kind\":\"", pos) + 8;
  text.insert(k, "Bogus");
  try {
    parse_log(text);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line, 3u);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("unknown event kind"), std::string::npos);
  }
}

TEST(Serialize, MalformedLinesNameTheLine) {
  const std::string good = serialize_event(ev(EventKind::TranscribedText, "a", "u", 0, 1)) + "\n";
  for (const std::string bad : {"{", "[]", "{\"seq\":2}", "", "{\"seq\":-1}"}) {
    try {
      parse_log(good + bad + "\n");
      FAIL() << bad;
    } catch (const ParseError& e) {
      EXPECT_EQ(e.line, 2u) << bad;
    }
  }
}

TEST(Metrics, FourMessagesOneUntranslated) {
  const auto log = simulate(four_message_trace(), tltest::sim_config(5));
  const auto m = compute_metrics(log.view(), "alice");
  EXPECT_EQ(m.messages_sent, 4);
  EXPECT_DOUBLE_EQ(m.untranslated_pct, 25.0);
  EXPECT_DOUBLE_EQ(m.machine_pct, 75.0);
  EXPECT_DOUBLE_EQ(m.discount_ratio, 0.125);  // "bonjour" is lexicon-covered: 0.5 * 1/4
  EXPECT_GE(m.learning_items_attempted, 1);  // at least the practice utterance
  const auto b = compute_metrics(log.view(), "bob");
  EXPECT_EQ(b.messages_sent, 0);
  EXPECT_DOUBLE_EQ(b.untranslated_pct, 0.0);
  EXPECT_DOUBLE_EQ(b.machine_pct, 0.0);
}

TEST(Metrics, StageDurationsSumToSession) {
  const auto log = simulate(tltest::random_trace(8, 40), tltest::sim_config(8));
  for (const char* p : {"alice", "bob"}) {
    const auto m = compute_metrics(log.view(), p);
    TimeMs sum = 0;
    for (const auto& [_, d] : m.stage_durations) sum += d;
    EXPECT_EQ(sum, m.session_length);
    EXPECT_EQ(m.free_time_ms, m.stage_durations.at(Stage::Waiting) + m.stage_durations.at(Stage::Idle));
    EXPECT_GE(m.untranslated_pct, 0.0);
    EXPECT_LE(m.machine_pct, 100.0);
  }
}

TEST(Metrics, EqualBruteForceRecount) {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto log = simulate(tltest::random_trace(seed + 500, 50), tltest::sim_config(seed));
    for (const char* p : {"alice", "bob"}) {
      const auto m = compute_metrics(log.view(), p);
      const auto r = tltest::recount(log, p);
      EXPECT_EQ(m.messages_sent, r.sent);
      EXPECT_EQ(m.untranslated_pct, tltest::tenth_percent(r.untranslated, r.sent)) << seed << p;
      EXPECT_EQ(m.machine_pct, tltest::tenth_percent(r.machine, r.sent)) << seed << p;
    }
  }
}

TEST(Metrics, DiscountIsCapped) {
  Trace tr = four_message_trace();
  for (auto& u : tr.utterances)
    if (!u.practice) {
      u.translate = false;
      u.text = "bonjour";
    }
  const auto m = compute_metrics(simulate(tr, tltest::sim_config(1)).view(), "alice");
  EXPECT_DOUBLE_EQ(m.untranslated_pct, 100.0);
  EXPECT_DOUBLE_EQ(m.discount_ratio, 0.3);
}

TEST(Questionnaire, RecordsAtCloseTime) {
  auto log = simulate(four_message_trace(), tltest::sim_config(2));
  const auto end = log_session_end(log.view());
  const auto seq = record_questionnaire(log, {"alice", {{"q1", 4}, {"q2", 5}}, std::string("fine")});
  const auto& e = log.events().back();
  EXPECT_EQ(e.seq, seq);
  EXPECT_EQ(e.kind, EventKind::QuestionnaireResponse);
  EXPECT_EQ(e.t_start, end);
  EXPECT_EQ(e.payload["answers"][1]["likert"], 5);
  EXPECT_EQ(e.payload["free_text"], "fine");
  EXPECT_TRUE(validate_timeline(log.view()).empty());
}

TEST(Questionnaire, OutOfRangeRejected) {
  EventLog log("s");
  EXPECT_THROW(record_questionnaire(log, {"alice", {{"q1", 6}}, std::nullopt}), ValidationError);
  EXPECT_THROW(record_questionnaire(log, {"alice", {{"q1", 0}}, std::nullopt}), ValidationError);
  EXPECT_TRUE(log.empty());
}

TEST(Questionnaire, EmptyFreeTextOmitted) {
  EventLog log("s");
  record_questionnaire(log, {"alice", {{"q1", 3}}, std::string()});
  EXPECT_FALSE(log.events().back().payload.contains("free_text"));
}

TEST(Questionnaire, ShippedQuestionSet) {
  std::ifstream in(tltest::data_path("questionnaire.json"));
  const auto j = Json::parse(in);
  std::set<std::string> ids;
  for (const auto& q : j.at("questions")) ids.insert(q.at("id").get<std::string>());
  for (const char* id : {"naturalness", "effectiveness", "difficulty_understanding", "difficulty_turn_taking",
                         "learning_efficacy", "disruption", "preference"})
    EXPECT_TRUE(ids.count(id)) << id;
}

TEST(Report, EmptyLogPrintsZeroRow) {
  const auto r = build_report(EventLog("s"));
  EXPECT_TRUE(r.metrics.empty());
  const auto text = report_to_text(r);
  EXPECT_NE(text.find("participant"), std::string::npos);
  EXPECT_NE(text.find("0.0"), std::string::npos);
}

TEST(Report, NumbersEqualComputeMetrics) {
  const auto log = simulate(tltest::random_trace(61, 20), tltest::sim_config(61));
  const auto r = build_report(log);
  ASSERT_EQ(r.metrics.size(), 2u);
  const auto j = report_to_json(r);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& p = r.metrics[i].participant;
    auto want = metrics_to_json(compute_metrics(log.view(), p));
    auto got = j["participants"][i];
    ASSERT_TRUE(got.contains("timeline"));
    got.erase("timeline");
    EXPECT_EQ(got, want);
  }
}

TEST(Completeness, FiveKindsWithTimes) {
  const auto log = simulate(tltest::random_trace(9, 12, {1.0, 0.0, 0.0, 0.0, 0.0, 1.0}), tltest::sim_config(9));
  for (auto k : kConversationKinds) {
    bool seen = false;
    for (const auto& e : log.events()) seen |= e.kind == k;
    EXPECT_TRUE(seen) << to_string(k);
  }
}

TEST(Ordering, PerUtteranceEventTimes) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto log = simulate(tltest::random_trace(seed + 900, 40), tltest::sim_config(seed));
    std::map<std::string, std::map<EventKind, TimeMs>> first;
    for (const auto& e : log.events())
      if (e.utterance && std::find(kConversationKinds.begin(), kConversationKinds.end(), e.kind) != kConversationKinds.end())
        first[*e.utterance].emplace(e.kind, e.t_start);
    for (const auto& [u, m] : first) {
      TimeMs prev = 0;
      for (auto k : kConversationKinds) {
        auto it = m.find(k);
        if (it == m.end()) continue;
        EXPECT_GE(it->second, prev) << u << " " << to_string(k);
        prev = it->second;
      }
    }
  }
}
