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
#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "core_model.hpp"
#include "delay_match.hpp"
#include "errors.hpp"
#include "event.hpp"
#include "translation.hpp"

namespace talklearn {

struct TraceUtterance {
  std::string id;
  std::string speaker;
  TimeMs t = 0;
  std::string text;
  bool translate = true;
  bool practice = false;
  std::optional<TimeMs> duration_ms;
  std::vector<double> frame_energies;
};

struct TraceOverride {
  std::string participant;
  TimeMs t = 0;
  bool visible = false;
};

/// A scripted two-party conversation.
struct Trace {
  std::string session;
  std::array<Participant, 2> participants;
  Lexicon lexicon;
  std::vector<std::string> keywords;
  std::optional<TimeMs> session_end_ms;
  std::vector<TraceUtterance> utterances;
  std::vector<TraceOverride> overrides;

  Json to_json() const {
    Json j;
    j["session"] = session;
    j["participants"] = Json::array();
    for (const auto& p : participants)
      j["participants"].push_back(Json{{"id", p.id}, {"native", p.native_language}, {"foreign", p.foreign_language}});
    j["lexicon"] = lexicon.to_json();
    j["keywords"] = keywords;
    if (session_end_ms) j["session_end_ms"] = *session_end_ms;
    j["utterances"] = Json::array();
    for (const auto& u : utterances) {
      Json ju;
      ju["id"] = u.id;
      ju["speaker"] = u.speaker;
      ju["t"] = u.t;
      ju["text"] = u.text;
      ju["translate"] = u.translate;
      ju["practice"] = u.practice;
      if (u.duration_ms) ju["duration_ms"] = *u.duration_ms;
      if (!u.frame_energies.empty()) ju["frame_energies"] = u.frame_energies;
      j["utterances"].push_back(std::move(ju));
    }
    if (!overrides.empty()) {
      j["overrides"] = Json::array();
      for (const auto& o : overrides)
        j["overrides"].push_back(Json{{"participant", o.participant}, {"t", o.t}, {"visible", o.visible}});
    }
    return j;
  }

  /// `base_dir` resolves a lexicon given as a relative path.
  static Trace from_json(const Json& j, const std::filesystem::path& base_dir = {}) {
    if (!j.is_object()) throw ValidationError("trace must be a JSON object");
    Trace tr;
    try {
      tr.session = j.value("session", std::string("session"));
      const auto& ps = j.at("participants");
      if (!ps.is_array() || ps.size() != 2) throw ValidationError("trace needs exactly two participants");
      for (std::size_t i = 0; i < 2; ++i)
        tr.participants[i] = Participant{ps[i].at("id").get<std::string>(), ps[i].at("native").get<std::string>(),
                                         ps[i].at("foreign").get<std::string>(), false};
      const auto& lex = j.at("lexicon");
      const auto& a = tr.participants[0];
      if (lex.is_string()) {
        std::filesystem::path path = lex.get<std::string>();
        if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
        tr.lexicon = Lexicon::load(path.string(), a.native_language, a.foreign_language);
      } else {
        tr.lexicon = Lexicon::from_json(lex, a.native_language, a.foreign_language);
      }
      tr.keywords = j.value("keywords", std::vector<std::string>{});
      if (j.contains("session_end_ms")) tr.session_end_ms = j["session_end_ms"].get<TimeMs>();
      std::size_t n = 0;
      for (const auto& ju : j.at("utterances")) {
        TraceUtterance u;
        u.id = ju.value("id", "u" + std::to_string(++n));
        u.speaker = ju.at("speaker").get<std::string>();
        u.t = ju.at("t").get<TimeMs>();
        u.text = ju.at("text").get<std::string>();
        u.translate = ju.value("translate", true);
        u.practice = ju.value("practice", false);
        if (ju.contains("duration_ms")) u.duration_ms = ju["duration_ms"].get<TimeMs>();
        u.frame_energies = ju.value("frame_energies", std::vector<double>{});
        tr.utterances.push_back(std::move(u));
      }
      for (const auto& jo : j.value("overrides", Json::array()))
        tr.overrides.push_back(
            {jo.at("participant").get<std::string>(), jo.at("t").get<TimeMs>(), jo.at("visible").get<bool>()});
    } catch (const Json::exception& e) {
      throw ValidationError(std::string("trace: ") + e.what());
    } catch (const ConfigError& e) {
      throw ValidationError(std::string("trace: ") + e.what());
    }
    return tr;
  }

  static Trace load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open trace '" + path + "'");
    Json j;
    try {
      j = Json::parse(in);
    } catch (const Json::parse_error& e) {
      throw ValidationError("trace '" + path + "': " + e.what());
    }
    return from_json(j, std::filesystem::path(path).parent_path());
  }
};

// ---------------------------------------------------------------------------
// Compilation to timed inputs

struct CaptureWindow {
  TimeMs start = 0;
  TimeMs end = 0;
};

/// Capture interval of one trace utterance. With frame energies the voiced
/// span found by the detector is used (relative to `t`); otherwise
/// duration_ms, otherwise the mock speech length of the text.
inline CaptureWindow capture_window(const TraceUtterance& u, const VadParams& vad, double rate_ms_per_char) {
  if (!u.frame_energies.empty()) {
    const auto runs = detect_activity(u.frame_energies, vad);
    if (runs.empty()) throw ValidationError("utterance '" + u.id + "': no voice activity in frame energies");
    return {u.t + static_cast<TimeMs>(runs.front().begin) * vad.frame_period_ms,
            u.t + static_cast<TimeMs>(runs.back().end) * vad.frame_period_ms};
  }
  if (u.duration_ms) {
    if (*u.duration_ms <= 0) throw ValidationError("utterance '" + u.id + "': duration_ms must be positive");
    return {u.t, u.t + *u.duration_ms};
  }
  return {u.t, u.t + synthesize_speech(u.text, rate_ms_per_char)};
}

enum class ActionKind { UtteranceStart, UtteranceEnd, Override, Leave };

/// One timed input to a session, as a client would send it.
struct ScriptAction {
  TimeMs t = 0;
  ActionKind kind = ActionKind::UtteranceStart;
  std::string participant;
  Utterance utterance;  // id/flags for starts; complete for ends
  bool visible = false;
};

struct Script {
  std::vector<ScriptAction> actions;  // sorted by time, stable
  TimeMs session_end = 0;
};

/// Checks the trace and turns it into time-ordered inputs, ending with both
/// participants leaving at the session end.
inline Script compile_script(const Trace& trace, const VadParams& vad, double rate_ms_per_char, TimeMs tail_ms) {
  SessionConfig sc{trace.session, {trace.participants[0], trace.participants[1]}};
  create_session(sc);  // participant validation
  if (!trace.lexicon.supports(trace.participants[0].native_language, trace.participants[0].foreign_language))
    throw ValidationError("lexicon does not cover " + trace.participants[0].native_language + "/" +
                          trace.participants[0].foreign_language);

  Script script;
  std::set<std::string> ids;
  std::map<std::string, CaptureWindow> last;
  std::map<std::string, TimeMs> last_t;
  TimeMs latest = 0;
  for (const auto& u : trace.utterances) {
    if (u.speaker != trace.participants[0].id && u.speaker != trace.participants[1].id)
      throw ValidationError("utterance '" + u.id + "': unknown speaker '" + u.speaker + "'");
    if (u.t < 0) throw ValidationError("utterance '" + u.id + "': negative time");
    if (u.text.empty()) throw ValidationError("utterance '" + u.id + "': empty text");
    if (!ids.insert(u.id).second) throw ValidationError("duplicate utterance id '" + u.id + "'");
    const auto w = capture_window(u, vad, rate_ms_per_char);
    if (auto it = last.find(u.speaker); it != last.end()) {
      if (u.t < last_t[u.speaker]) throw ValidationError("utterance '" + u.id + "': speaker times decrease");
      if (w.start < it->second.end)
        throw ValidationError("utterance '" + u.id + "' overlaps the speaker's previous utterance");
    }
    last[u.speaker] = w;
    last_t[u.speaker] = u.t;
    latest = std::max(latest, w.end);

    Utterance utt;
    utt.id = u.id;
    utt.speaker = u.speaker;
    utt.text = u.text;
    utt.translate_requested = u.translate;
    utt.practice = u.practice;
    utt.capture_start = w.start;
    utt.capture_end = w.end;
    utt.frame_energies = u.frame_energies;
    script.actions.push_back({w.start, ActionKind::UtteranceStart, u.speaker, utt, false});
    script.actions.push_back({w.end, ActionKind::UtteranceEnd, u.speaker, utt, false});
  }
  for (const auto& o : trace.overrides) {
    if (o.participant != trace.participants[0].id && o.participant != trace.participants[1].id)
      throw ValidationError("override for unknown participant '" + o.participant + "'");
    if (o.t < 0) throw ValidationError("override at negative time");
    script.actions.push_back({o.t, ActionKind::Override, o.participant, {}, o.visible});
    latest = std::max(latest, o.t);
  }
  script.session_end = trace.session_end_ms.value_or(latest + tail_ms);
  if (script.session_end < latest) throw ValidationError("session_end_ms precedes the last scripted input");
  for (const auto& p : trace.participants)
    script.actions.push_back({script.session_end, ActionKind::Leave, p.id, {}, false});
  std::stable_sort(script.actions.begin(), script.actions.end(),
                   [](const ScriptAction& a, const ScriptAction& b) { return a.t < b.t; });
  return script;
}

}  // namespace talklearn
