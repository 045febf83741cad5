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

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "core_model.hpp"
#include "errors.hpp"
#include "event.hpp"
#include "util.hpp"

namespace talklearn {

/// Append-only session log. Sequence numbers start at 1 and have no gaps.
class EventLog {
 public:
  EventLog() = default;
  explicit EventLog(std::string session_id) : session_(std::move(session_id)) {}
  EventLog(std::string session_id, std::vector<TimelineEvent> events)
      : session_(std::move(session_id)), events_(std::move(events)) {
    for (const auto& e : events_)
      if (e.kind == EventKind::SessionClosed) closed_ = true;
  }

  const std::string& session_id() const { return session_; }
  const std::vector<TimelineEvent>& events() const { return events_; }
  std::span<const TimelineEvent> view() const { return events_; }
  std::size_t size() const { return events_.size(); }
  bool empty() const { return events_.empty(); }
  bool closed() const { return closed_; }
  std::uint64_t last_seq() const { return events_.empty() ? 0 : events_.back().seq; }

  /// Appends with the next sequence number and returns it.
  std::uint64_t append(TimelineEvent event) {
    if (closed_) throw LogError("session '" + session_ + "' is closed");
    return push(std::move(event));
  }

  /// Only QuestionnaireResponse may follow SessionClosed.
  std::uint64_t append_after_close(TimelineEvent event) {
    if (event.kind != EventKind::QuestionnaireResponse)
      throw LogError("only questionnaire responses may be recorded after close");
    return push(std::move(event));
  }

 private:
  std::uint64_t push(TimelineEvent event) {
    if (event.t_start < 0) throw LogError("event starts before the session epoch");
    if (event.t_end < event.t_start)
      throw LogError(std::string(to_string(event.kind)) + " event ends before it starts");
    event.seq = last_seq() + 1;
    if (event.session.empty()) event.session = session_;
    if (event.kind == EventKind::SessionClosed) closed_ = true;
    events_.push_back(std::move(event));
    return events_.back().seq;
  }

  std::string session_;
  std::vector<TimelineEvent> events_;
  bool closed_ = false;
};

inline std::uint64_t append_event(EventLog& log, TimelineEvent event) { return log.append(std::move(event)); }

// ---------------------------------------------------------------------------
// JSON Lines persistence

inline Json event_to_json(const TimelineEvent& e) {
  Json j;
  j["seq"] = e.seq;
  j["session"] = e.session;
  j["kind"] = std::string(to_string(e.kind));
  j["participant"] = e.participant;
  j["utt"] = e.utterance ? Json(*e.utterance) : Json(nullptr);
  j["t_start"] = e.t_start;
  j["t_end"] = e.t_end;
  j["payload"] = e.payload;
  return j;
}

inline std::string serialize_event(const TimelineEvent& e) { return event_to_json(e).dump(); }

inline std::string serialize_log(std::span<const TimelineEvent> events) {
  std::string out;
  for (const auto& e : events) {
    out += serialize_event(e);
    out += '\n';
  }
  return out;
}

inline std::string serialize_log(const EventLog& log) { return serialize_log(log.view()); }

inline TimelineEvent event_from_json(const Json& j, std::size_t line) {
  auto need = [&](const char* key) -> const Json& {
    if (!j.contains(key)) throw ParseError(line, std::string("missing key '") + key + "'");
    return j.at(key);
  };
  try {
    if (!j.is_object()) throw ParseError(line, "expected a JSON object");
    TimelineEvent e;
    const auto& seq = need("seq");
    if (!seq.is_number_unsigned()) throw ParseError(line, "seq must be a positive integer");
    e.seq = seq.get<std::uint64_t>();
    e.session = need("session").get<std::string>();
    const auto kind_name = need("kind").get<std::string>();
    auto kind = event_kind_from_string(kind_name);
    if (!kind) throw ParseError(line, "unknown event kind '" + kind_name + "'");
    e.kind = *kind;
    e.participant = need("participant").get<std::string>();
    const auto& utt = need("utt");
    if (!utt.is_null()) e.utterance = utt.get<std::string>();
    const auto& ts = need("t_start");
    const auto& te = need("t_end");
    if (!ts.is_number_integer() || !te.is_number_integer()) throw ParseError(line, "times must be integers");
    e.t_start = ts.get<TimeMs>();
    e.t_end = te.get<TimeMs>();
    e.payload = need("payload");
    if (!e.payload.is_object()) throw ParseError(line, "payload must be an object");
    return e;
  } catch (const Json::exception& ex) {
    throw ParseError(line, ex.what());
  }
}

/// Parses JSON Lines. Errors name the offending 1-based line.
inline EventLog parse_log(std::string_view bytes) {
  std::vector<TimelineEvent> events;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    auto nl = bytes.find('\n', pos);
    const bool last = nl == std::string_view::npos;
    auto line = bytes.substr(pos, last ? std::string_view::npos : nl - pos);
    ++line_no;
    pos = last ? bytes.size() : nl + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) throw ParseError(line_no, "empty line");
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& ex) {
      throw ParseError(line_no, std::string("malformed JSON: ") + ex.what());
    }
    events.push_back(event_from_json(j, line_no));
  }
  std::string session = events.empty() ? std::string{} : events.front().session;
  return EventLog(std::move(session), std::move(events));
}

inline EventLog read_log_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open log '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_log(ss.str());
}

inline void write_log_file(const std::string& path, const EventLog& log) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write log '" + path + "'");
  out << serialize_log(log);
  if (!out) throw Error("failed writing log '" + path + "'");
}

// ---------------------------------------------------------------------------
// Metrics

struct IncentiveConfig {
  double coefficient = 0.5;
  double cap = 0.3;
};

struct SessionMetrics {
  std::string participant;
  std::int64_t messages_sent = 0;
  double untranslated_pct = 0;
  double machine_pct = 0;
  std::map<Stage, TimeMs> stage_durations;
  TimeMs session_length = 0;
  TimeMs free_time_ms = 0;
  std::int64_t learning_items_attempted = 0;
  double learning_accuracy = 0;  // percent
  double discount_ratio = 0;
};

inline Json metrics_to_json(const SessionMetrics& m) {
  Json stages = Json::object();
  for (Stage s : kAllStages) {
    auto it = m.stage_durations.find(s);
    stages[std::string(to_string(s))] = it == m.stage_durations.end() ? 0 : it->second;
  }
  Json j;
  j["participant"] = m.participant;
  j["messages_sent"] = m.messages_sent;
  j["untranslated_pct"] = m.untranslated_pct;
  j["machine_pct"] = m.machine_pct;
  j["stage_durations"] = stages;
  j["session_length"] = m.session_length;
  j["free_time_ms"] = m.free_time_ms;
  j["learning_items_attempted"] = m.learning_items_attempted;
  j["learning_accuracy"] = m.learning_accuracy;
  j["discount_ratio"] = m.discount_ratio;
  return j;
}

/// Per-participant figures derived from a validated log. Practice
/// utterances are not messages and are excluded from every denominator.
inline SessionMetrics compute_metrics(std::span<const TimelineEvent> log, const std::string& participant,
                                      const IncentiveConfig& incentive = {}) {
  SessionMetrics m;
  m.participant = participant;
  for (Stage s : kAllStages) m.stage_durations[s] = 0;

  std::set<std::string> sent;
  std::int64_t untranslated = 0, covered_untranslated = 0;
  for (const auto& e : log) {
    if (e.kind != EventKind::OriginalMedia || e.participant != participant || !e.utterance) continue;
    if (payload_flag(e.payload, "practice") || payload_flag(e.payload, "interrupted")) continue;
    sent.insert(*e.utterance);
    if (!payload_flag(e.payload, "translate")) {
      ++untranslated;
      if (payload_flag(e.payload, "lexicon_covered")) ++covered_untranslated;
    }
  }
  std::int64_t machine = 0;
  std::int64_t attempted = 0, correct = 0;
  for (const auto& e : log) {
    if (e.participant != participant) continue;
    if (e.kind == EventKind::TranslatedText && e.utterance && sent.contains(*e.utterance) &&
        e.payload.value("source", std::string{}) == "Machine")
      ++machine;
    if (e.kind == EventKind::LearningAnswer && payload_flag(e.payload, "scored")) {
      ++attempted;
      if (payload_flag(e.payload, "correct")) ++correct;
    }
  }
  const auto n = static_cast<std::int64_t>(sent.size());
  m.messages_sent = n;
  m.untranslated_pct = util::percent_1dp(untranslated, n);
  m.machine_pct = util::percent_1dp(machine, n);
  m.learning_items_attempted = attempted;
  m.learning_accuracy = util::percent_1dp(correct, attempted);
  m.discount_ratio =
      n == 0 ? 0.0
             : std::min(incentive.coefficient * static_cast<double>(covered_untranslated) / static_cast<double>(n),
                        incentive.cap);

  if (!log.empty()) {
    const auto partition = stage_intervals(log);
    if (auto it = partition.find(participant); it != partition.end())
      for (const auto& iv : it->second) m.stage_durations[iv.stage] += iv.length();
    m.session_length = log_session_end(log);
  }
  m.free_time_ms = m.stage_durations[Stage::Waiting] + m.stage_durations[Stage::Idle];
  return m;
}

// ---------------------------------------------------------------------------
// Questionnaires

struct QuestionnaireRecord {
  std::string participant;
  std::vector<std::pair<std::string, int>> answers;
  std::optional<std::string> free_text;
};

inline constexpr int kLikertMin = 1;
inline constexpr int kLikertMax = 5;

/// Stores a questionnaire as a QuestionnaireResponse at session close time.
inline std::uint64_t record_questionnaire(EventLog& log, const QuestionnaireRecord& record) {
  Json answers = Json::array();
  for (const auto& [q, v] : record.answers) {
    if (v < kLikertMin || v > kLikertMax)
      throw ValidationError("likert value " + std::to_string(v) + " for '" + q + "' is outside [1,5]");
    answers.push_back(Json{{"question", q}, {"likert", v}});
  }
  TimelineEvent e;
  e.kind = EventKind::QuestionnaireResponse;
  e.participant = record.participant;
  e.t_start = e.t_end = log_session_end(log.view());
  e.payload["answers"] = answers;
  if (record.free_text && !record.free_text->empty()) e.payload["free_text"] = *record.free_text;
  return log.closed() ? log.append_after_close(std::move(e)) : log.append(std::move(e));
}

}  // namespace talklearn
