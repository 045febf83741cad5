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

#include <optional>
#include <string>
#include <vector>

#include "simulate.hpp"
#include "trace.hpp"
#include "wire.hpp"

namespace talklearn {

/// Headless participant replaying its part of a trace over the wire. It
/// sends its whole script once the session starts, then an open-ended
/// Advance, and answers prompts like the simulator's learner does.
class ScriptedClient {
 public:
  ScriptedClient(std::string session, Participant me, std::vector<ScriptAction> script, SimulatedLearner learner)
      : session_(std::move(session)), me_(std::move(me)), learner_(learner) {
    for (auto& a : script)
      if (a.participant == me_.id) script_.push_back(std::move(a));
  }

  /// Builds one client per participant from a compiled trace.
  static std::vector<ScriptedClient> for_trace(const Trace& trace, const SimulationConfig& sim) {
    const Config& c = sim.config;
    const auto script =
        compile_script(trace, c.delay_match.vad, c.translation.speech_rate_ms_per_char, c.simulation.tail_ms);
    const SimulatedLearner learner(util::mix_seed(sim.seed, "learner"), c.translation.speech_rate_ms_per_char);
    std::vector<ScriptedClient> out;
    for (const auto& p : trace.participants) out.emplace_back(trace.session, p, script.actions, learner);
    return out;
  }

  const Participant& participant() const { return me_; }

  WireMessage join() const {
    return make_message(WireType::Join, session_, std::nullopt,
                        Json{{"participant", {{"id", me_.id}, {"native", me_.native_language},
                                              {"foreign", me_.foreign_language}}}});
  }

  /// Replies to one server message.
  std::vector<WireMessage> on_message(const WireMessage& m) {
    received_.push_back(m);
    std::vector<WireMessage> out;
    switch (m.type) {
      case WireType::Join:
        if (m.payload.value("status", std::string{}) == "started" && !started_) {
          started_ = true;
          for (const auto& a : script_) out.push_back(to_message(a));
          out.push_back(make_message(WireType::Advance, session_, std::nullopt));
        }
        break;
      case WireType::LearningPrompt:
        if (m.payload.value("active", false) && m.t) {
          const auto r = learner_.answer(me_.id, m.payload, *m.t);
          out.push_back(make_message(WireType::LearningAnswer, session_, r.t,
                                     Json{{"item", m.payload.at("item")}, {"answer", r.answer}}));
        }
        break;
      case WireType::MetricsSnapshot: done_ = true; break;
      default: break;
    }
    return out;
  }

  bool done() const { return done_; }
  const std::vector<WireMessage>& received() const { return received_; }

 private:
  WireMessage to_message(const ScriptAction& a) const {
    switch (a.kind) {
      case ActionKind::UtteranceStart:
        return make_message(WireType::UtteranceStart, session_, a.t,
                            Json{{"utt", a.utterance.id},
                                 {"translate", a.utterance.translate_requested},
                                 {"practice", a.utterance.practice}});
      case ActionKind::UtteranceEnd:
        return make_message(WireType::UtteranceEnd, session_, a.t,
                            Json{{"utt", a.utterance.id}, {"text", a.utterance.text}});
      case ActionKind::Override:
        return make_message(WireType::VisibilityUpdate, session_, a.t, Json{{"visible", a.visible}});
      case ActionKind::Leave: break;
    }
    return make_message(WireType::Leave, session_, a.t);
  }

  std::string session_;
  Participant me_;
  std::vector<ScriptAction> script_;
  SimulatedLearner learner_;
  std::vector<WireMessage> received_;
  bool started_ = false;
  bool done_ = false;
};

}  // namespace talklearn
