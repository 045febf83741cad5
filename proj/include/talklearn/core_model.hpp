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
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"
#include "event.hpp"
#include "util.hpp"

namespace talklearn {

struct Participant {
  std::string id;
  std::string native_language;
  std::string foreign_language;
  bool visibility_override = false;

  bool operator==(const Participant&) const = default;
};

struct Utterance {
  std::string id;
  std::string speaker;
  std::string language;
  std::string text;
  TimeMs capture_start = 0;
  TimeMs capture_end = 0;
  bool translate_requested = true;
  bool practice = false;
  std::vector<double> frame_energies;

  TimeMs duration() const { return capture_end - capture_start; }
};

/// Stages in descending priority: Speaking > Viewing > Learning > Waiting > Idle.
enum class Stage { Speaking, Waiting, Viewing, Learning, Idle };

inline constexpr std::array<Stage, 5> kAllStages = {Stage::Speaking, Stage::Waiting, Stage::Viewing,
                                                     Stage::Learning, Stage::Idle};

inline std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::Speaking: return "Speaking";
    case Stage::Waiting: return "Waiting";
    case Stage::Viewing: return "Viewing";
    case Stage::Learning: return "Learning";
    case Stage::Idle: return "Idle";
  }
  return "?";
}

inline std::optional<Stage> stage_from_string(std::string_view s) {
  for (Stage st : kAllStages)
    if (to_string(st) == s) return st;
  return std::nullopt;
}

inline bool is_free(Stage s) { return s == Stage::Waiting || s == Stage::Idle; }

struct StageInterval {
  std::string participant;
  Stage stage = Stage::Idle;
  TimeMs t_start = 0;
  TimeMs t_end = 0;

  TimeMs length() const { return t_end - t_start; }
  bool operator==(const StageInterval&) const = default;
};

enum class VisibilityCause { SynthesizedPresentation, ManualOverride };

inline std::string_view to_string(VisibilityCause c) {
  return c == VisibilityCause::SynthesizedPresentation ? "SynthesizedPresentation" : "ManualOverride";
}

struct Visibility {
  std::string participant;
  bool visible = false;
  TimeMs t_start = 0;
  TimeMs t_end = 0;
  std::optional<VisibilityCause> cause;
};

enum class StageTrigger {
  UtteranceStart,
  UtteranceEnd,
  RemoteUtteranceEnd,
  PresentationStart,
  PresentationEnd,
  LearningShown,
  LearningDone,
};

/// Order in which coincident triggers are applied: releases before claims.
inline int trigger_rank(StageTrigger t) {
  switch (t) {
    case StageTrigger::PresentationEnd: return 0;
    case StageTrigger::UtteranceEnd: return 1;
    case StageTrigger::LearningDone: return 2;
    case StageTrigger::RemoteUtteranceEnd: return 3;
    case StageTrigger::PresentationStart: return 4;
    case StageTrigger::UtteranceStart: return 5;
    case StageTrigger::LearningShown: return 6;
  }
  return 7;
}

/// Per-participant stage state. The stage is always the highest-priority
/// active condition, so coincident triggers resolve by priority and a
/// replay of the same triggers yields the same intervals.
class StageMachine {
 public:
  explicit StageMachine(std::string participant = {}) : participant_(std::move(participant)) {}

  /// Applies a trigger without committing an interval boundary. Returns
  /// false if the trigger was rejected (LearningShown while Speaking or
  /// Viewing).
  bool apply(StageTrigger trigger) {
    switch (trigger) {
      case StageTrigger::UtteranceStart: speaking_ = true; break;
      case StageTrigger::UtteranceEnd: speaking_ = false; break;
      case StageTrigger::RemoteUtteranceEnd: ++pipeline_; break;
      case StageTrigger::PresentationStart:
        viewing_ = true;
        if (pipeline_ > 0) --pipeline_;
        break;
      case StageTrigger::PresentationEnd: viewing_ = false; break;
      case StageTrigger::LearningShown:
        if (speaking_ || viewing_) return false;
        learning_ = true;
        break;
      case StageTrigger::LearningDone: learning_ = false; break;
    }
    return true;
  }

  Stage current() const {
    if (speaking_) return Stage::Speaking;
    if (viewing_) return Stage::Viewing;
    if (learning_) return Stage::Learning;
    if (pipeline_ > 0) return Stage::Waiting;
    return Stage::Idle;
  }

  /// Closes the open interval at `t` if the derived stage changed.
  std::optional<StageInterval> commit(TimeMs t) {
    if (t < since_) throw TimingError("stage change at " + std::to_string(t) + " precedes " + std::to_string(since_));
    const Stage now = current();
    if (now == open_) return std::nullopt;
    std::optional<StageInterval> closed;
    if (t > since_) closed = StageInterval{participant_, open_, since_, t};
    open_ = now;
    since_ = t;
    return closed;
  }

  /// Closes the open interval at `t` unconditionally (session end).
  std::optional<StageInterval> close(TimeMs t) {
    if (t < since_) throw TimingError("session end precedes last stage change");
    std::optional<StageInterval> closed;
    if (t > since_) closed = StageInterval{participant_, open_, since_, t};
    since_ = t;
    return closed;
  }

  Stage committed() const { return open_; }
  TimeMs since() const { return since_; }
  int pipeline() const { return pipeline_; }
  bool speaking() const { return speaking_; }
  bool viewing() const { return viewing_; }
  bool learning() const { return learning_; }
  const std::string& participant() const { return participant_; }

 private:
  std::string participant_;
  bool speaking_ = false;
  bool viewing_ = false;
  bool learning_ = false;
  int pipeline_ = 0;
  Stage open_ = Stage::Idle;
  TimeMs since_ = 0;
};

struct SessionConfig {
  std::string session_id;
  std::vector<Participant> participants;
};

struct StageAdvance {
  bool accepted = true;
  Stage stage = Stage::Idle;
  std::optional<StageInterval> closed;
};

class Session {
 public:
  Session(std::string id, std::array<Participant, 2> participants)
      : id_(std::move(id)), participants_(std::move(participants)),
        machines_{StageMachine(participants_[0].id), StageMachine(participants_[1].id)} {}

  const std::string& id() const { return id_; }
  const std::array<Participant, 2>& participants() const { return participants_; }

  std::size_t index_of(std::string_view pid) const {
    for (std::size_t i = 0; i < 2; ++i)
      if (participants_[i].id == pid) return i;
    throw ValidationError("unknown participant '" + std::string(pid) + "'");
  }
  bool has(std::string_view pid) const {
    return participants_[0].id == pid || participants_[1].id == pid;
  }
  const Participant& participant(std::string_view pid) const { return participants_[index_of(pid)]; }
  Participant& participant(std::string_view pid) { return participants_[index_of(pid)]; }
  const Participant& partner_of(std::string_view pid) const { return participants_[1 - index_of(pid)]; }

  StageMachine& machine(std::string_view pid) { return machines_[index_of(pid)]; }
  const StageMachine& machine(std::string_view pid) const { return machines_[index_of(pid)]; }
  Stage stage(std::string_view pid) const { return machine(pid).committed(); }

 private:
  std::string id_;
  std::array<Participant, 2> participants_;
  std::array<StageMachine, 2> machines_;
};

/// Validates the pair and orders participants by id.
inline Session create_session(const SessionConfig& config) {
  if (config.participants.size() != 2)
    throw ConfigError("a session needs exactly two participants, got " +
                      std::to_string(config.participants.size()));
  const auto& a = config.participants[0];
  const auto& b = config.participants[1];
  for (const auto& p : config.participants) {
    if (p.id.empty()) throw ConfigError("participant id must be nonempty");
    if (p.native_language == p.foreign_language)
      throw ConfigError("participant '" + p.id + "' has identical native and foreign language");
  }
  if (a.id == b.id) throw ConfigError("duplicate participant id '" + a.id + "'");
  if (a.native_language != b.foreign_language || a.foreign_language != b.native_language)
    throw ConfigError("participants '" + a.id + "' and '" + b.id + "' do not have complementary language pairs");
  // canonical order, so join order never changes the log
  if (b.id < a.id) return Session(config.session_id, {b, a});
  return Session(config.session_id, {a, b});
}

/// Applies one trigger at `t` and commits the resulting stage.
inline StageAdvance advance_stage(Session& session, std::string_view participant, StageTrigger trigger, TimeMs t) {
  auto& m = session.machine(participant);
  if (t < m.since())
    throw TimingError("trigger at " + std::to_string(t) + " precedes last stage change at " +
                      std::to_string(m.since()));
  StageAdvance out;
  out.accepted = m.apply(trigger);
  out.closed = m.commit(t);
  out.stage = m.committed();
  return out;
}

// ---------------------------------------------------------------------------
// Timeline replay

using StagePartition = std::map<std::string, std::vector<StageInterval>>;

/// Participants named anywhere in the log, in order of first appearance.
inline std::vector<std::string> log_participants(std::span<const TimelineEvent> log) {
  std::vector<std::string> out;
  for (const auto& e : log)
    if (!e.participant.empty() && std::find(out.begin(), out.end(), e.participant) == out.end())
      out.push_back(e.participant);
  return out;
}

inline TimeMs log_session_end(std::span<const TimelineEvent> log) {
  TimeMs end = 0;
  for (const auto& e : log) {
    if (e.kind == EventKind::SessionClosed) return e.t_end;
    end = std::max(end, e.t_end);
  }
  return end;
}

inline bool payload_flag(const Json& payload, const char* key) {
  auto it = payload.find(key);
  return it != payload.end() && it->is_boolean() && it->get<bool>();
}

/// Throws ValidationError unless seq strictly increases and events are in
/// commit order (t_end nondecreasing).
inline void require_ordered(std::span<const TimelineEvent> log) {
  for (std::size_t i = 1; i < log.size(); ++i) {
    if (log[i].seq <= log[i - 1].seq)
      throw ValidationError("unordered log: seq " + std::to_string(log[i].seq) + " follows " +
                            std::to_string(log[i - 1].seq));
    if (log[i].t_end < log[i - 1].t_end)
      throw ValidationError("unordered log: event seq " + std::to_string(log[i].seq) + " commits at " +
                            std::to_string(log[i].t_end) + " before " + std::to_string(log[i - 1].t_end));
  }
}

/// Derives each participant's stage partition of [0, session_end] by
/// replaying the triggers implied by media, presentation and (optionally)
/// learning events. StageChange events are not consulted.
inline StagePartition stage_intervals(std::span<const TimelineEvent> log, bool include_learning = true) {
  require_ordered(log);
  const auto people = log_participants(log);
  const TimeMs session_end = log_session_end(log);

  struct Trig {
    TimeMs t;
    std::string who;
    StageTrigger trigger;
  };
  std::vector<Trig> trigs;
  auto partner = [&](const std::string& p) -> std::optional<std::string> {
    for (const auto& q : people)
      if (q != p) return q;
    return std::nullopt;
  };
  for (const auto& e : log) {
    switch (e.kind) {
      case EventKind::OriginalMedia: {
        trigs.push_back({e.t_start, e.participant, StageTrigger::UtteranceStart});
        trigs.push_back({e.t_end, e.participant, StageTrigger::UtteranceEnd});
        if (!payload_flag(e.payload, "practice") && !payload_flag(e.payload, "interrupted"))
          if (auto q = partner(e.participant)) trigs.push_back({e.t_end, *q, StageTrigger::RemoteUtteranceEnd});
        break;
      }
      case EventKind::SynthesizedVideo:
        trigs.push_back({e.t_start, e.participant, StageTrigger::PresentationStart});
        trigs.push_back({e.t_end, e.participant, StageTrigger::PresentationEnd});
        break;
      case EventKind::LearningItemShown:
        if (include_learning) {
          trigs.push_back({e.t_start, e.participant, StageTrigger::LearningShown});
          trigs.push_back({e.t_end, e.participant, StageTrigger::LearningDone});
        }
        break;
      default: break;
    }
  }
  std::stable_sort(trigs.begin(), trigs.end(), [](const Trig& a, const Trig& b) {
    if (a.t != b.t) return a.t < b.t;
    return trigger_rank(a.trigger) < trigger_rank(b.trigger);
  });

  std::map<std::string, StageMachine> machines;
  StagePartition out;
  for (const auto& p : people) {
    machines.emplace(p, StageMachine(p));
    out[p];
  }
  auto push = [&](const std::optional<StageInterval>& iv) {
    if (!iv) return;
    auto& list = out[iv->participant];
    if (!list.empty() && list.back().stage == iv->stage && list.back().t_end == iv->t_start)
      list.back().t_end = iv->t_end;
    else
      list.push_back(*iv);
  };
  for (std::size_t i = 0; i < trigs.size();) {
    const TimeMs t = trigs[i].t;
    std::size_t j = i;
    for (; j < trigs.size() && trigs[j].t == t; ++j) machines.at(trigs[j].who).apply(trigs[j].trigger);
    for (auto& [p, m] : machines) push(m.commit(t));
    i = j;
  }
  for (auto& [p, m] : machines) push(m.close(std::max(session_end, m.since())));
  return out;
}

struct Violation {
  std::uint64_t seq = 0;
  std::string message;
};

/// Reports structural problems; an empty result means the timeline is valid.
inline std::vector<Violation> validate_timeline(std::span<const TimelineEvent> log) {
  std::vector<Violation> out;
  auto add = [&](std::uint64_t seq, std::string msg) { out.push_back({seq, std::move(msg)}); };

  bool ordered = true;
  bool closed = false;
  std::map<std::string, TimeMs> translated_end;
  std::map<std::string, bool> practice;
  std::map<std::string, std::vector<StageInterval>> logged_stages;

  for (std::size_t i = 0; i < log.size(); ++i) {
    const auto& e = log[i];
    if (i > 0 && e.seq <= log[i - 1].seq) {
      add(e.seq, "non-monotonic sequence number");
      ordered = false;
    }
    if (e.t_end < e.t_start) add(e.seq, "t_end precedes t_start");
    if (i > 0 && e.t_end < log[i - 1].t_end) {
      add(e.seq, "event committed out of time order");
      ordered = false;
    }
    if (closed && e.kind != EventKind::QuestionnaireResponse) add(e.seq, "event after SessionClosed");
    switch (e.kind) {
      case EventKind::SessionClosed: closed = true; break;
      case EventKind::OriginalMedia:
        if (e.utterance) practice[*e.utterance] = payload_flag(e.payload, "practice");
        break;
      case EventKind::TranslatedText:
        if (e.utterance) translated_end[*e.utterance] = e.t_end;
        break;
      case EventKind::SynthesizedVideo:
        if (e.utterance) {
          auto it = translated_end.find(*e.utterance);
          if (it != translated_end.end() && e.t_start < it->second)
            add(e.seq, "SynthesizedVideo for " + *e.utterance + " starts before its TranslatedText ends");
          if (practice[*e.utterance]) add(e.seq, "practice utterance " + *e.utterance + " was presented");
        }
        break;
      case EventKind::StageChange: {
        auto st = e.payload.contains("stage") && e.payload["stage"].is_string()
                      ? stage_from_string(e.payload["stage"].get<std::string>())
                      : std::nullopt;
        if (!st) {
          add(e.seq, "StageChange without a valid stage");
          break;
        }
        auto& list = logged_stages[e.participant];
        if (!list.empty() && e.t_start < list.back().t_end)
          add(e.seq, "stage intervals of " + e.participant + " overlap");
        else if (!list.empty() && e.t_start > list.back().t_end)
          add(e.seq, "gap in stage intervals of " + e.participant);
        else if (list.empty() && e.t_start != 0)
          add(e.seq, "first stage interval of " + e.participant + " does not start at 0");
        list.push_back({e.participant, *st, e.t_start, e.t_end});
        break;
      }
      default: break;
    }
  }

  if (ordered && closed) {
    const auto replay = stage_intervals(log);
    for (const auto& [p, logged] : logged_stages) {
      std::vector<StageInterval> merged;
      for (const auto& iv : logged) {
        if (!merged.empty() && merged.back().stage == iv.stage && merged.back().t_end == iv.t_start)
          merged.back().t_end = iv.t_end;
        else
          merged.push_back(iv);
      }
      auto it = replay.find(p);
      if (it == replay.end() || it->second != merged)
        add(0, "logged stage intervals of " + p + " disagree with the replayed partition");
    }
  }
  return out;
}

}  // namespace talklearn
