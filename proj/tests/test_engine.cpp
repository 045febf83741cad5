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
#include "talklearn/engine.hpp"

using namespace talklearn;

namespace {

Trace two_way_trace() {
  Trace tr;
  tr.session = "two";
  tr.participants = {Participant{"alice", "en", "fr", false}, Participant{"bob", "fr", "en", false}};
  tr.lexicon = tltest::lexicon();
  tr.utterances = {
      {"u1", "alice", 0, "hello apple", true, false, 1000, {}},
      {"u2", "bob", 5000, "bonjour pomme", true, false, 1000, {}},
  };
  return tr;
}

Config no_jitter() {
  Config c;
  c.translation.latency.jitter_ms = 0;
  return c;
}

const TimelineEvent* find(const EventLog& log, EventKind kind, const std::string& utt) {
  for (const auto& e : log.events())
    if (e.kind == kind && e.utterance == utt) return &e;
  return nullptr;
}

Session two_people() {
  return create_session({"s", {Participant{"alice", "en", "fr", false}, Participant{"bob", "fr", "en", false}}});
}

Utterance spoken(std::string id, std::string speaker, std::string text) {
  Utterance u;
  u.id = std::move(id);
  u.speaker = std::move(speaker);
  u.text = std::move(text);
  return u;
}

std::vector<Outbound> messages_to(const std::vector<Outbound>& out, const std::string& who, WireType type) {
  std::vector<Outbound> r;
  for (const auto& o : out)
    if (o.to == who && o.message.type == type) r.push_back(o);
  return r;
}

}  // namespace

TEST(Simulate, TwoUtteranceTimelineByHand) {
  const auto log = simulate(two_way_trace(), tltest::sim_config(1, no_jitter()));
  // u1: captured [0,1000], translated after 500 + 20*11 ms, presented for max(1000, 13*60)
  const auto* tt = find(log, EventKind::TranslatedText, "u1");
  ASSERT_NE(tt, nullptr);
  EXPECT_EQ(tt->t_start, 1000);
  EXPECT_EQ(tt->t_end, 1720);
  EXPECT_EQ(tt->payload["text"], "bonjour pomme");
  const auto* sv = find(log, EventKind::SynthesizedVideo, "u1");
  ASSERT_NE(sv, nullptr);
  EXPECT_EQ(sv->participant, "bob");
  EXPECT_EQ(sv->t_start, 1720);
  EXPECT_EQ(sv->t_end, 2720);
  EXPECT_EQ(sv->payload["pad_ms"], 0);
  const auto* ts = find(log, EventKind::TranslatedSpeech, "u1");
  ASSERT_NE(ts, nullptr);
  EXPECT_EQ(ts->t_start, 1720);
  EXPECT_EQ(ts->t_end, 2500);
  // u2: captured [5000,6000], 500 + 20*13 ms
  const auto* sv2 = find(log, EventKind::SynthesizedVideo, "u2");
  ASSERT_NE(sv2, nullptr);
  EXPECT_EQ(sv2->participant, "alice");
  EXPECT_EQ(sv2->t_start, 6760);
  EXPECT_EQ(sv2->t_end, 7760);
  for (auto k : kConversationKinds)
    for (const char* u : {"u1", "u2"}) {
      const auto* e = find(log, k, u);
      ASSERT_NE(e, nullptr) << to_string(k) << " " << u;
      EXPECT_LE(e->t_start, e->t_end);
    }
  const auto bob = stage_intervals(log.view()).at("bob");
  EXPECT_EQ(bob[0], (StageInterval{"bob", Stage::Idle, 0, 1000}));
  EXPECT_EQ(bob[1], (StageInterval{"bob", Stage::Waiting, 1000, 1720}));
  EXPECT_EQ(bob[2], (StageInterval{"bob", Stage::Viewing, 1720, 2720}));
}

TEST(Simulate, ByteIdenticalForEqualSeeds) {
  const auto tr = tltest::random_trace(5, 40);
  const auto a = serialize_log(simulate(tr, tltest::sim_config(11)));
  const auto b = serialize_log(simulate(tr, tltest::sim_config(11)));
  EXPECT_EQ(a, b);
  EXPECT_NE(a, serialize_log(simulate(tr, tltest::sim_config(12))));
}

TEST(Simulate, PracticeUtteranceIsGradedNotPresented) {
  Trace tr = two_way_trace();
  tr.utterances.push_back({"p1", "alice", 10000, "bonjour pomme", false, true, 1000, {}});
  const auto log = simulate(tr, tltest::sim_config(3, no_jitter()));
  int synth = 0, answers = 0;
  for (const auto& e : log.events()) {
    if (e.utterance != "p1") continue;
    synth += e.kind == EventKind::SynthesizedVideo;
    if (e.kind == EventKind::LearningAnswer) {
      ++answers;
      EXPECT_EQ(e.participant, "alice");
      EXPECT_TRUE(e.payload["correct"].get<bool>());  // matches her own Sent item "bonjour pomme"
    }
  }
  EXPECT_EQ(synth, 0);
  EXPECT_EQ(answers, 1);
}

TEST(Simulate, RequiresSeed) {
  EXPECT_THROW(SimulationConfig::make(Config{}, std::nullopt), ConfigError);
  Config c;
  c.simulation.seed = 4;
  EXPECT_EQ(SimulationConfig::make(c, std::nullopt).seed, 4u);
  EXPECT_EQ(SimulationConfig::make(c, 9).seed, 9u);
}

TEST(Simulate, TrimPolicyShortensSegments) {
  Config c = no_jitter();
  c.delay_match.policy = AlignPolicy::Trim;
  auto tr = two_way_trace();
  tr.utterances[0].duration_ms = 3000;
  const auto log = simulate(tr, tltest::sim_config(1, c));
  const auto* sv = find(log, EventKind::SynthesizedVideo, "u1");
  ASSERT_NE(sv, nullptr);
  EXPECT_EQ(sv->t_end - sv->t_start, 780);
  EXPECT_EQ(sv->payload["policy"], "Trim");
}

TEST(TraceCompile, RejectsInvalidTraces) {
  const auto& c = Config{};
  auto compile = [&](const Trace& t) { return compile_script(t, c.delay_match.vad, 60, 5000); };
  auto bad = two_way_trace();
  bad.utterances[0].speaker = "carol";
  EXPECT_THROW(compile(bad), ValidationError);
  bad = two_way_trace();
  bad.utterances[1].t = -1;
  EXPECT_THROW(compile(bad), ValidationError);
  bad = two_way_trace();
  bad.utterances[1].id = "u1";
  EXPECT_THROW(compile(bad), ValidationError);
  bad = two_way_trace();
  bad.utterances.push_back({"u3", "alice", 500, "hello", true, false, 1000, {}});  // overlaps u1
  EXPECT_THROW(compile(bad), ValidationError);
  bad = two_way_trace();
  bad.utterances[0].text.clear();
  EXPECT_THROW(compile(bad), ValidationError);
  const auto ok = compile(two_way_trace());
  EXPECT_EQ(ok.session_end, 6000 + 5000);
  EXPECT_EQ(ok.actions.back().kind, ActionKind::Leave);
}

TEST(TraceCompile, FrameEnergiesSetCaptureWindow) {
  TraceUtterance u{"u", "alice", 1000, "hi", true, false, std::nullopt, {0, 0, 0.5, 0.5, 0.5, 0.5, 0, 0, 0, 0, 0, 0, 0, 0}};
  const auto w = capture_window(u, VadParams{}, 60);
  EXPECT_EQ(w.start, 1000 + 2 * 20);
  EXPECT_EQ(w.end, 1000 + 11 * 20);  // 4 voiced frames + 5 hangover
  u.frame_energies.assign(10, 0.0);
  EXPECT_THROW(capture_window(u, VadParams{}, 60), ValidationError);
}

TEST(TraceFile, ShippedStoriesLoadAndRoundTrip) {
  for (const char* name : {"story_market", "story_holiday", "story_family"}) {
    const auto tr = Trace::load(tltest::data_path(std::string("traces/") + name + ".json"));
    EXPECT_EQ(tr.utterances.size(), 10u) << name;
    EXPECT_FALSE(tr.keywords.empty()) << name;
    const auto back = Trace::from_json(tr.to_json());
    EXPECT_EQ(back.to_json(), tr.to_json()) << name;
    const auto log = simulate(tr, tltest::sim_config(7));
    EXPECT_TRUE(validate_timeline(log.view()).empty()) << name;
  }
}

// ---------------------------------------------------------------------------
// Direct engine driving

TEST(Engine, OverrideEchoedImmediately) {
  SessionEngine engine(two_people(), {}, {});
  engine.set_override("alice", true, 100);
  const auto out = engine.run();
  const auto vis = messages_to(out, "alice", WireType::VisibilityUpdate);
  ASSERT_EQ(vis.size(), 1u);
  EXPECT_EQ(vis[0].message.t, 100);
  EXPECT_EQ(vis[0].message.payload["visible"], true);
  EXPECT_EQ(vis[0].message.payload["cause"], "ManualOverride");
  EXPECT_TRUE(messages_to(out, "bob", WireType::VisibilityUpdate).empty());
}

TEST(Engine, VisibilityStateIsOr) {
  EXPECT_FALSE(visibility_state(false, false));
  EXPECT_TRUE(visibility_state(true, false));
  EXPECT_TRUE(visibility_state(false, true));
  EXPECT_TRUE(visibility_state(true, true));
}

TEST(Engine, AuxiliaryPictureFollowsPartner) {
  MockTranslator mock(tltest::lexicon(), LatencyModel{500, 0, 0}, 60, 1);
  SessionEngine engine(two_people(), {}, [&](const TranslationJob& j) -> std::optional<TranslationOutcome> { return mock(j); });
  engine.utterance_start("alice", "u1", true, false, 0);
  auto out = engine.step();
  auto aux = messages_to(out, "bob", WireType::AuxiliaryPicture);
  ASSERT_EQ(aux.size(), 1u);
  EXPECT_EQ(aux[0].message.payload["reason"], "remote_speaking");
  EXPECT_TRUE(messages_to(out, "alice", WireType::AuxiliaryPicture).empty());
  engine.utterance_end(spoken("u1", "alice", "hello apple"), 1000);
  out = engine.step();
  aux = messages_to(out, "bob", WireType::AuxiliaryPicture);
  ASSERT_EQ(aux.size(), 1u);
  EXPECT_EQ(aux[0].message.payload["reason"], "translating");
  // presentation start at 1500: caption then synthesized segment, never raw media
  out = engine.step();
  ASSERT_GE(out.size(), 2u);
  EXPECT_EQ(out[0].message.type, WireType::Caption);
  EXPECT_EQ(out[0].message.payload["text"], "bonjour pomme");
  EXPECT_EQ(out[1].message.type, WireType::SynthesizedStart);
  EXPECT_EQ(out[1].message.payload["caption"], "bonjour pomme");
  EXPECT_EQ(out[1].message.payload["duration_ms"], 1000);
  for (const auto& o : out) EXPECT_EQ(o.message.dump().find("media:"), std::string::npos);
  aux = messages_to(out, "bob", WireType::AuxiliaryPicture);
  ASSERT_EQ(aux.size(), 1u);
  EXPECT_EQ(aux[0].message.payload["reason"], "none");
  // alice is visible to bob while her segment plays
  auto vis = messages_to(out, "alice", WireType::VisibilityUpdate);
  ASSERT_EQ(vis.size(), 1u);
  EXPECT_EQ(vis[0].message.payload["cause"], "SynthesizedPresentation");
}

TEST(Engine, AsyncTranslationAndFailure) {
  SessionEngine engine(two_people(), {}, [](const TranslationJob&) { return std::optional<TranslationOutcome>{}; });
  engine.utterance_start("alice", "u1", true, false, 0);
  engine.utterance_end(spoken("u1", "alice", "hello apple"), 1000);
  engine.utterance_start("alice", "u2", true, false, 2000);
  engine.utterance_end(spoken("u2", "alice", "the cat"), 3000);
  engine.run();
  EXPECT_EQ(find(engine.log(), EventKind::SynthesizedVideo, "u1"), nullptr);
  // u2 fails first; it still waits behind u1
  engine.translation_complete(TranslationFailure{"u2", "timeout", 2, 3000, 5000}, 5000);
  auto out = engine.run();
  ASSERT_EQ(messages_to(out, "alice", WireType::Error).size(), 1u);
  EXPECT_EQ(find(engine.log(), EventKind::SynthesizedVideo, "u2"), nullptr);
  TranslationResult r;
  r.utterance_id = "u1";
  r.transcribed_text = "hello apple";
  r.translated_text = "bonjour pomme";
  r.speech_duration_ms = 780;
  r.t_requested = 1000;
  engine.translation_complete(r, 6000);
  engine.run();
  const auto* f = find(engine.log(), EventKind::TranslationFailed, "u2");
  ASSERT_NE(f, nullptr);
  EXPECT_EQ(f->payload["reason"], "timeout");
  EXPECT_EQ(f->payload["attempts"], 2);
  const auto* s1 = find(engine.log(), EventKind::SynthesizedVideo, "u1");
  const auto* s2 = find(engine.log(), EventKind::SynthesizedVideo, "u2");
  ASSERT_NE(s1, nullptr);
  ASSERT_NE(s2, nullptr);
  EXPECT_EQ(s1->t_start, 6000);
  EXPECT_EQ(s2->t_start, s1->t_end);
  EXPECT_EQ(s2->payload["source"], "None");
  EXPECT_EQ(s2->payload["caption"], "the cat");
}

TEST(Engine, ForceCloseLeavesValidPartialLog) {
  MockTranslator mock(tltest::lexicon(), LatencyModel{500, 0, 0}, 60, 1);
  SessionEngine engine(two_people(), {}, [&](const TranslationJob& j) -> std::optional<TranslationOutcome> { return mock(j); });
  engine.utterance_start("alice", "u1", true, false, 0);
  engine.utterance_end(spoken("u1", "alice", "hello apple"), 1000);
  engine.utterance_start("bob", "u2", true, false, 1200);
  while (engine.next_time() && *engine.next_time() <= 1500) engine.step(1700);
  const auto out = engine.force_close(1700);  // mid-presentation, bob mid-utterance
  EXPECT_TRUE(engine.closed());
  EXPECT_EQ(messages_to(out, "alice", WireType::MetricsSnapshot).size(), 1u);
  EXPECT_TRUE(validate_timeline(engine.log().view()).empty());
  const auto* om = find(engine.log(), EventKind::OriginalMedia, "u2");
  ASSERT_NE(om, nullptr);
  EXPECT_TRUE(om->payload["interrupted"].get<bool>());
  const auto* sv = find(engine.log(), EventKind::SynthesizedVideo, "u1");
  ASSERT_NE(sv, nullptr);
  EXPECT_EQ(sv->t_end, 1700);
  EXPECT_EQ(engine.log().events().back().kind, EventKind::SessionClosed);
  EXPECT_THROW(engine.utterance_start("alice", "u9", true, false, 1800), LogError);
}

TEST(Engine, InputValidation) {
  SessionEngine engine(two_people(), {}, {});
  EXPECT_THROW(engine.utterance_start("carol", "u1", true, false, 0), ValidationError);
  engine.utterance_start("alice", "u1", true, false, 100);
  EXPECT_THROW(engine.utterance_start("bob", "u1", true, false, 100), ValidationError);
  EXPECT_THROW(engine.utterance_end(spoken("u1", "alice", "hi"), 100), ValidationError);
  EXPECT_THROW(engine.utterance_end(spoken("u7", "alice", "hi"), 200), ValidationError);
  EXPECT_THROW(engine.utterance_end(spoken("u1", "alice", ""), 200), ValidationError);
  engine.run();
  EXPECT_THROW(engine.set_override("alice", true, 50), TimingError);
}

TEST(Engine, WrongAnswerTargetIsAnError) {
  SessionEngine engine(two_people(), {}, {});
  engine.learning_answer("alice", "nothing", "x", 10);
  const auto out = engine.run();
  EXPECT_EQ(messages_to(out, "alice", WireType::Error).size(), 1u);
}

TEST(Engine, PromptsPreemptedBySpeechAreClosed) {
  // bob gets a prompt after alice's first message, then starts speaking at once
  MockTranslator mock(tltest::lexicon(), LatencyModel{500, 0, 0}, 60, 1);
  SessionEngine engine(two_people(), {}, [&](const TranslationJob& j) -> std::optional<TranslationOutcome> { return mock(j); });
  engine.utterance_start("alice", "u1", true, false, 0);
  engine.utterance_end(spoken("u1", "alice", "hello apple"), 1000);
  std::vector<Outbound> prompts;
  while (prompts.empty() && engine.next_time()) prompts = messages_to(engine.step(20000), "bob", WireType::LearningPrompt);
  ASSERT_EQ(prompts.size(), 1u);
  EXPECT_EQ(prompts[0].message.payload["foreign"], "hello apple");
  EXPECT_TRUE(engine.prompt_active("bob"));
  engine.utterance_start("bob", "u2", true, false, *prompts[0].message.t + 100);
  const auto out = engine.run();
  const auto closed = messages_to(out, "bob", WireType::LearningPrompt);
  ASSERT_EQ(closed.size(), 1u);
  EXPECT_EQ(closed[0].message.payload["active"], false);
  EXPECT_EQ(closed[0].message.payload["reason"], "preempted");
  EXPECT_FALSE(engine.prompt_active("bob"));
}
