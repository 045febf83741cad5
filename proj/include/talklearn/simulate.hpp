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

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "config.hpp"
#include "core_model.hpp"
#include "engine.hpp"
#include "errors.hpp"
#include "learning.hpp"
#include "telemetry.hpp"
#include "trace.hpp"
#include "translation.hpp"
#include "util.hpp"
#include "wire.hpp"

namespace talklearn {

struct SimulationConfig {
  Config config;
  std::uint64_t seed = 0;

  /// Virtual-clock runs must be seeded: `seed` wins over the config file.
  static SimulationConfig make(Config config, std::optional<std::uint64_t> seed) {
    auto s = seed ? seed : config.simulation.seed;
    if (!s) throw ConfigError("a seed is required for virtual-clock runs");
    return SimulationConfig{std::move(config), *s};
  }
};

inline EngineOptions engine_options(const Config& c, std::optional<Lexicon> lexicon) {
  EngineOptions o;
  o.policy = c.delay_match.policy;
  o.min_window_ms = c.delay_match.min_window_ms;
  o.speech_rate_ms_per_char = c.translation.speech_rate_ms_per_char;
  o.answer_allowance_ms = c.learning.answer_allowance_ms;
  o.correct_threshold = c.learning.correct_threshold;
  o.incentive = c.learning.incentive;
  o.lexicon = std::move(lexicon);
  return o;
}

struct LearnerReply {
  std::string answer;
  TimeMs t = 0;
};

/// Scripted stand-in for a person answering prompts. Each reply depends
/// only on (seed, participant, item, prompt time), so the simulator and a
/// headless wire client produce the same answers.
class SimulatedLearner {
 public:
  SimulatedLearner(std::uint64_t seed, double speech_rate_ms_per_char)
      : seed_(seed), rate_(speech_rate_ms_per_char) {}

  /// `prompt` is a LearningPrompt payload with active = true.
  LearnerReply answer(const std::string& participant, const Json& prompt, TimeMs shown) const {
    const auto item = prompt.at("item").get<std::string>();
    const auto foreign = prompt.at("foreign").get<std::string>();
    const int box = prompt.value("box", kMinBox);
    std::mt19937_64 rng(util::mix_seed(seed_, participant + "/" + item + "/" + std::to_string(shown)));
    const TimeMs think = util::draw_between(rng, 500, 2000);
    const double p_correct = std::min(0.95, 0.35 + 0.15 * box);
    LearnerReply r;
    r.t = shown + synthesize_speech(foreign, rate_) + think;
    r.answer = util::draw_chance(rng, p_correct) ? foreign : corrupt(foreign, rng);
    return r;
  }

 private:
  static std::string corrupt(const std::string& text, std::mt19937_64& rng) {
    auto words = util::split_whitespace(text);
    if (words.size() > 1) {
      words.erase(words.begin() + static_cast<std::ptrdiff_t>(util::draw_below(rng, words.size())));
      if (words.size() > 1) words.pop_back();
      return util::join(words, " ");
    }
    // reverse by code point so the answer stays valid UTF-8
    std::vector<std::string> chars;
    for (unsigned char c : text) {
      if (chars.empty() || (c & 0xC0) != 0x80) chars.emplace_back();
      chars.back() += static_cast<char>(c);
    }
    std::reverse(chars.begin(), chars.end());
    const std::string w = util::join(chars, "");
    return w == text ? text + "?" : w;
  }

  std::uint64_t seed_;
  double rate_;
};

/// Runs a trace to completion on the virtual clock and returns the
/// validated log.
inline EventLog simulate(const Trace& trace, const SimulationConfig& sim) {
  const Config& c = sim.config;
  const auto script = compile_script(trace, c.delay_match.vad, c.translation.speech_rate_ms_per_char,
                                     c.simulation.tail_ms);
  auto session = create_session(SessionConfig{trace.session, {trace.participants[0], trace.participants[1]}});
  MockTranslator mock(trace.lexicon, c.translation.latency, c.translation.speech_rate_ms_per_char,
                      util::mix_seed(sim.seed, "translation"));
  SessionEngine engine(std::move(session), engine_options(c, trace.lexicon),
                       [&mock](const TranslationJob& job) -> std::optional<TranslationOutcome> { return mock(job); });
  const SimulatedLearner learner(util::mix_seed(sim.seed, "learner"), c.translation.speech_rate_ms_per_char);

  for (const auto& a : script.actions) {
    switch (a.kind) {
      case ActionKind::UtteranceStart:
        engine.utterance_start(a.participant, a.utterance.id, a.utterance.translate_requested, a.utterance.practice,
                               a.t);
        break;
      case ActionKind::UtteranceEnd: engine.utterance_end(a.utterance, a.t); break;
      case ActionKind::Override: engine.set_override(a.participant, a.visible, a.t); break;
      case ActionKind::Leave: engine.request_close(a.participant, a.t); break;
    }
  }
  while (engine.next_time()) {
    for (const auto& o : engine.step()) {
      const auto& m = o.message;
      if (m.type != WireType::LearningPrompt || !m.payload.value("active", false)) continue;
      const auto reply = learner.answer(o.to, m.payload, *m.t);
      engine.learning_answer(o.to, m.payload.at("item").get<std::string>(), reply.answer, reply.t);
    }
  }
  if (!engine.closed()) engine.force_close(engine.now());

  const auto violations = validate_timeline(engine.log().view());
  if (!violations.empty())
    throw ValidationError("simulated log is invalid: seq " + std::to_string(violations.front().seq) + ": " +
                          violations.front().message);
  return engine.log();
}

}  // namespace talklearn
