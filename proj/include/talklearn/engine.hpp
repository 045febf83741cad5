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
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "core_model.hpp"
#include "delay_match.hpp"
#include "errors.hpp"
#include "event.hpp"
#include "learning.hpp"
#include "telemetry.hpp"
#include "translation.hpp"
#include "util.hpp"
#include "wire.hpp"

namespace talklearn {

/// visible = remote party is viewing one of my synthesized segments, or the
/// manual override is on.
inline bool visibility_state(bool remote_viewing, bool override_on) { return remote_viewing || override_on; }

struct EngineOptions {
  AlignPolicy policy = AlignPolicy::FreezePad;
  TimeMs min_window_ms = kDefaultMinWindowMs;
  double speech_rate_ms_per_char = 60;
  TimeMs answer_allowance_ms = 2000;
  double correct_threshold = kCorrectThreshold;
  IncentiveConfig incentive;
  /// Used only to flag untranslated messages fully covered by the lexicon.
  std::optional<Lexicon> lexicon;
};

/// The per-session Delay-Match state machine, driven as a discrete-event
/// system. External inputs and internal timers share one queue ordered by
/// (time, phase, arrival). step() processes every entry at the earliest
/// time, then commits stage, visibility and auxiliary-picture changes.
///
/// The engine never reads a clock: the simulator feeds it virtual times,
/// the live server feeds it virtual or wall times.
class SessionEngine {
 public:
  /// Returns an outcome synchronously (its completion time may lie in the
  /// future), or nullopt when the result will arrive later through
  /// translation_complete().
  using Translator = std::function<std::optional<TranslationOutcome>(const TranslationJob&)>;

  SessionEngine(Session session, EngineOptions options, Translator translator)
      : session_(std::move(session)), options_(std::move(options)), translator_(std::move(translator)),
        log_(session_.id()) {
    for (const auto& p : session_.participants()) {
      vis_[p.id] = VisState{};
      aux_[p.id] = "none";
    }
  }

  const Session& session() const { return session_; }
  const EventLog& log() const { return log_; }
  bool closed() const { return closed_; }
  TimeMs now() const { return now_; }
  const std::vector<LearningItem>& items(const std::string& pid) const { return items_[session_.index_of(pid)]; }
  bool prompt_active(const std::string& pid) const { return prompts_.contains(pid); }

  // -------------------------------------------------------------------------
  // Inputs. Times must not precede already-processed time.

  void utterance_start(const std::string& speaker, const std::string& utterance_id, bool translate, bool practice,
                       TimeMs t) {
    check_input(t);
    require_participant(speaker);
    if (utterance_id.empty()) throw ValidationError("utterance id must be nonempty");
    if (known_utterances_.contains(utterance_id)) throw ValidationError("duplicate utterance id '" + utterance_id + "'");
    known_utterances_[utterance_id] = t;
    push(t, kInStart, InStart{speaker, utterance_id, translate, practice}, true, session_.index_of(speaker));
  }

  void utterance_end(Utterance u, TimeMs t) {
    check_input(t);
    require_participant(u.speaker);
    if (u.text.empty()) throw ValidationError("utterance '" + u.id + "' has empty text");
    auto started = known_utterances_.find(u.id);
    if (started == known_utterances_.end()) throw ValidationError("utterance '" + u.id + "' ended without a start");
    if (t <= started->second) throw ValidationError("utterance '" + u.id + "' must have positive duration");
    u.capture_end = t;
    const int who = static_cast<int>(session_.index_of(u.speaker));
    push(t, kInEnd, InEnd{std::move(u)}, true, who);
  }

  void set_override(const std::string& pid, bool on, TimeMs t) {
    check_input(t);
    require_participant(pid);
    push(t, kInOverride, InOverride{pid, on}, true, session_.index_of(pid));
  }

  void learning_answer(const std::string& pid, const std::string& item_id, std::string answer, TimeMs t) {
    check_input(t);
    require_participant(pid);
    push(t, kInAnswer, InAnswer{pid, item_id, std::move(answer)}, false, session_.index_of(pid));
  }

  /// The session closes once every participant asked, after the pipeline drains.
  void request_close(const std::string& pid, TimeMs t) {
    check_input(t);
    require_participant(pid);
    push(t, kInClose, InClose{pid}, true, session_.index_of(pid));
  }

  /// Delivery of an asynchronous translation outcome.
  void translation_complete(TranslationOutcome outcome, TimeMs t) {
    check_input(t);
    if (async_inflight_ > 0) --async_inflight_;
    push(t, kCompletion, Completion{std::move(outcome)}, false);
  }

  /// Immediate close at `t` (disconnect, shutdown). Work in progress is
  /// logged as interrupted; queued work is dropped.
  std::vector<Outbound> force_close(TimeMs t) {
    std::vector<Outbound> out;
    if (closed_) return out;
    t = std::max(t, now_);
    // drain anything already due at or before t first
    while (!queue_.empty() && queue_.begin()->t <= t) {
      auto more = step();
      out.insert(out.end(), more.begin(), more.end());
      if (closed_) return out;
    }
    now_ = t;
    queue_.clear();
    do_close(t, out);
    return out;
  }

  // -------------------------------------------------------------------------
  // Driving

  std::optional<TimeMs> next_time() const {
    if (closed_ || queue_.empty()) return std::nullopt;
    return queue_.begin()->t;
  }

  /// Processes the earliest batch. `external_horizon` promises that no
  /// external input earlier than it is still to be submitted; it bounds how
  /// far ahead a learning prompt may be planned.
  std::vector<Outbound> step(TimeMs external_horizon = kNever) {
    std::vector<Outbound> out;
    if (closed_ || queue_.empty()) return out;
    const TimeMs t = queue_.begin()->t;
    now_ = t;
    batch_overrides_.clear();
    while (!queue_.empty() && queue_.begin()->t == t) {
      while (!queue_.empty() && queue_.begin()->t == t) {
        Pending p = *queue_.begin();
        queue_.erase(queue_.begin());
        dispatch(p, out);
      }
      schedule_presentations(t);
    }
    finalize(t, external_horizon, out);
    return out;
  }

  /// Steps until the queue is empty or the session closed.
  std::vector<Outbound> run(TimeMs external_horizon = kNever) {
    std::vector<Outbound> out;
    while (next_time()) {
      auto more = step(external_horizon);
      out.insert(out.end(), more.begin(), more.end());
    }
    return out;
  }

 private:
  // phases: lower runs first within a time
  static constexpr int kSpeechEnd = 0;
  static constexpr int kPresEnd = 1;
  static constexpr int kInAnswer = 2;
  static constexpr int kPromptExpire = 3;
  static constexpr int kInEnd = 4;
  static constexpr int kCompletion = 5;
  static constexpr int kPresStart = 6;
  static constexpr int kInOverride = 7;
  static constexpr int kInStart = 8;
  static constexpr int kInClose = 9;

  struct InStart {
    std::string speaker, utterance_id;
    bool translate, practice;
  };
  struct InEnd {
    Utterance utterance;
  };
  struct InOverride {
    std::string pid;
    bool on;
  };
  struct InAnswer {
    std::string pid, item_id, answer;
  };
  struct InClose {
    std::string pid;
  };
  struct Completion {
    TranslationOutcome outcome;
  };
  struct PresStart {
    std::string receiver, utterance_id;
  };
  struct PresEnd {
    std::string receiver, utterance_id;
  };
  struct SpeechEnd {
    std::string receiver, utterance_id;
  };
  struct PromptExpire {
    std::string pid;
    std::uint64_t serial;
  };
  using Payload =
      std::variant<InStart, InEnd, InOverride, InAnswer, InClose, Completion, PresStart, PresEnd, SpeechEnd, PromptExpire>;

  struct Pending {
    TimeMs t;
    int phase;
    int who;  // participant index for inputs, so arrival order across connections does not matter
    std::uint64_t order;
    Payload what;
    bool external;  // scripted input that may end someone's free time
    bool operator<(const Pending& o) const { return std::tie(t, phase, who, order) < std::tie(o.t, o.phase, o.who, o.order); }
  };

  struct Capture {
    std::string utterance_id;
    TimeMs start;
    bool translate, practice;
  };

  struct UttState {
    Utterance utterance;
    MediaSegment video, audio;
    std::optional<TranslationResult> translation;
  };

  struct Prompt {
    LearningItem item;
    TimeMs shown;
    TimeMs deadline;
    std::uint64_t serial;
  };

  struct VisState {
    bool visible = false;
    std::optional<VisibilityCause> cause;
    TimeMs since = 0;
    bool operator==(const VisState& o) const { return visible == o.visible && cause == o.cause; }
  };

  void check_input(TimeMs t) const {
    if (closed_) throw LogError("session '" + session_.id() + "' is closed");
    if (t < now_) throw TimingError("input at " + std::to_string(t) + " precedes session time " + std::to_string(now_));
  }

  void require_participant(const std::string& pid) const {
    if (!session_.has(pid)) throw ValidationError("unknown participant '" + pid + "'");
  }

  void push(TimeMs t, int phase, Payload what, bool external, std::size_t who = 0) {
    queue_.insert(Pending{t, phase, static_cast<int>(who), next_order_++, std::move(what), external});
  }

  const std::string& partner(const std::string& pid) const { return session_.partner_of(pid).id; }

  void emit(std::vector<Outbound>& out, const std::string& to, WireType type, Json payload) {
    out.push_back({to, make_message(type, session_.id(), now_, std::move(payload))});
  }

  TimelineEvent event(EventKind kind, const std::string& participant, std::optional<std::string> utt, TimeMs a,
                      TimeMs b, Json payload) const {
    TimelineEvent e;
    e.session = session_.id();
    e.kind = kind;
    e.participant = participant;
    e.utterance = std::move(utt);
    e.t_start = a;
    e.t_end = b;
    e.payload = std::move(payload);
    return e;
  }

  void dispatch(Pending& p, std::vector<Outbound>& out) {
    std::visit([&](auto& w) { handle(w, p.t, out); }, p.what);
  }

  // -------------------------------------------------------------------------
  // Handlers

  void handle(InStart& in, TimeMs t, std::vector<Outbound>& out) {
    if (captures_.contains(in.speaker)) {
      emit(out, in.speaker, WireType::Error, Json{{"reason", "utterance already in progress"}});
      return;
    }
    captures_[in.speaker] = Capture{in.utterance_id, t, in.translate, in.practice};
    session_.machine(in.speaker).apply(StageTrigger::UtteranceStart);
    end_prompt(in.speaker, t, "preempted", out);
  }

  void handle(InEnd& in, TimeMs t, std::vector<Outbound>& out) {
    auto& u = in.utterance;
    auto cap = captures_.find(u.speaker);
    if (cap == captures_.end() || cap->second.utterance_id != u.id) {
      emit(out, u.speaker, WireType::Error, Json{{"reason", "utterance '" + u.id + "' is not in progress"}});
      return;
    }
    u.capture_start = cap->second.start;
    u.translate_requested = cap->second.translate;
    u.practice = cap->second.practice;
    captures_.erase(cap);
    session_.machine(u.speaker).apply(StageTrigger::UtteranceEnd);

    const auto& speaker = session_.participant(u.speaker);
    u.language = u.translate_requested ? speaker.native_language : speaker.foreign_language;
    auto [video, audio] = capture_segments(u);
    buffer_.register_utterance(u.id);
    buffer_.ingest(video);
    buffer_.ingest(audio);

    auto media = [](const MediaSegment& s) {
      return Json{{"ref", s.payload_ref}, {"duration_ms", s.duration_ms}, {"checksum", s.checksum}};
    };
    Json om;
    om["language"] = u.language;
    om["translate"] = u.translate_requested;
    om["practice"] = u.practice;
    om["lexicon_covered"] = options_.lexicon ? lexicon_covers(u.text, u.language, *options_.lexicon) : false;
    om["video"] = media(video);
    om["audio"] = media(audio);
    log_.append(event(EventKind::OriginalMedia, u.speaker, u.id, u.capture_start, u.capture_end, om));
    log_.append(event(EventKind::TranscribedText, u.speaker, u.id, u.capture_start, u.capture_end,
                      Json{{"text", transcribe(u)}}));

    utts_[u.id] = UttState{u, video, audio, std::nullopt};

    if (u.practice) grade_practice(u, t, out);

    const std::string& receiver = partner(u.speaker);
    if (!u.practice) {
      session_.machine(receiver).apply(StageTrigger::RemoteUtteranceEnd);
      planners_[receiver].expect(u.speaker, u.id);
    }

    if (u.translate_requested) {
      TranslationJob job{u, speaker.native_language, speaker.foreign_language, t};
      auto outcome = translator_(job);
      if (!outcome) {
        ++async_inflight_;
        return;
      }
      const TimeMs done = std::visit(
          [](const auto& o) {
            if constexpr (std::is_same_v<std::decay_t<decltype(o)>, TranslationResult>)
              return o.t_completed;
            else
              return o.t_failed;
          },
          *outcome);
      push(std::max(done, t), kCompletion, Completion{std::move(*outcome)}, false);
    } else if (!u.practice) {
      make_ready(utts_[u.id], untranslated_result(u, t));
    } else {
      buffer_.take(u.id);
    }
  }

  TranslationResult untranslated_result(const Utterance& u, TimeMs t) const {
    TranslationResult r;
    r.utterance_id = u.id;
    r.transcribed_text = u.text;
    r.translated_text = u.text;
    r.speech_duration_ms = u.duration();
    r.source = TranslationSource::None;
    r.t_requested = t;
    r.t_completed = t;
    return r;
  }

  void make_ready(UttState& st, const TranslationResult& r) {
    auto [video, audio] = buffer_.take(st.utterance.id);
    auto synth = align(st.utterance, video, audio, r, options_.policy);
    planners_[partner(st.utterance.speaker)].ready(std::move(synth));
  }

  void handle(Completion& in, TimeMs t, std::vector<Outbound>& out) {
    if (auto* r = std::get_if<TranslationResult>(&in.outcome)) {
      auto it = utts_.find(r->utterance_id);
      if (it == utts_.end()) return;
      auto& st = it->second;
      const auto& speaker = session_.participant(st.utterance.speaker);
      r->t_completed = t;
      st.translation = *r;
      Json p;
      p["text"] = r->translated_text;
      p["src"] = speaker.native_language;
      p["dst"] = speaker.foreign_language;
      p["source"] = std::string(to_string(r->source));
      log_.append(event(EventKind::TranslatedText, speaker.id, st.utterance.id, r->t_requested, t, p));
      add_item(speaker.id, make_sent_item(speaker.id, st.utterance.id, r->transcribed_text, r->translated_text, t));
      if (st.utterance.practice)
        buffer_.take(st.utterance.id);
      else
        make_ready(st, *r);
    } else {
      auto& f = std::get<TranslationFailure>(in.outcome);
      auto it = utts_.find(f.utterance_id);
      if (it == utts_.end()) return;
      auto& st = it->second;
      log_.append(event(EventKind::TranslationFailed, st.utterance.speaker, st.utterance.id,
                        std::min(f.t_requested, t), t, Json{{"reason", f.reason}, {"attempts", f.attempts}}));
      emit(out, st.utterance.speaker, WireType::Error,
           Json{{"reason", "translation failed: " + f.reason}, {"utt", st.utterance.id}});
      if (st.utterance.practice)
        buffer_.take(st.utterance.id);
      else
        make_ready(st, untranslated_result(st.utterance, t));
    }
  }

  void schedule_presentations(TimeMs /*t*/) {
    for (const auto& p : session_.participants()) {
      auto& planner = planners_[p.id];
      for (auto& seg : planner.drain(receiver_queues_[p.id])) {
        const TimeMs start = *seg.presentation_start;
        const TimeMs end = *seg.presentation_end;
        push(start, kPresStart, PresStart{p.id, seg.utterance_id}, false);
        push(end, kPresEnd, PresEnd{p.id, seg.utterance_id}, false);
        if (seg.source == TranslationSource::Machine)
          push(start + std::min(seg.speech_duration_ms, seg.final_duration_ms), kSpeechEnd,
               SpeechEnd{p.id, seg.utterance_id}, false);
        scheduled_[seg.utterance_id] = std::move(seg);
      }
    }
  }

  void handle(PresStart& in, TimeMs t, std::vector<Outbound>& out) {
    const auto& seg = scheduled_.at(in.utterance_id);
    end_prompt(in.receiver, t, "preempted", out);
    session_.machine(in.receiver).apply(StageTrigger::PresentationStart);
    presenting_[in.receiver] = in.utterance_id;
    emit(out, in.receiver, WireType::Caption, Json{{"utt", seg.utterance_id}, {"text", seg.caption_text}});
    Json p;
    p["utt"] = seg.utterance_id;
    p["speaker"] = seg.speaker;
    p["ref"] = seg.ref();
    p["caption"] = seg.caption_text;
    p["duration_ms"] = seg.final_duration_ms;
    p["source"] = std::string(to_string(seg.source));
    emit(out, in.receiver, WireType::SynthesizedStart, std::move(p));
  }

  void handle(SpeechEnd& in, TimeMs t, std::vector<Outbound>&) {
    const auto& seg = scheduled_.at(in.utterance_id);
    log_.append(event(EventKind::TranslatedSpeech, in.receiver, seg.utterance_id, *seg.presentation_start, t,
                      Json{{"duration_ms", seg.speech_duration_ms}, {"played_ms", t - *seg.presentation_start}}));
  }

  Json synth_payload(const SynthesizedSegment& seg) const {
    Json p;
    p["speaker"] = seg.speaker;
    p["ref"] = seg.ref();
    p["caption"] = seg.caption_text;
    p["video_ms"] = seg.video_duration_ms;
    p["speech_ms"] = seg.speech_duration_ms;
    p["final_ms"] = seg.final_duration_ms;
    p["pad_ms"] = seg.pad_applied_ms;
    p["policy"] = std::string(to_string(seg.policy));
    p["source"] = std::string(to_string(seg.source));
    p["ready"] = seg.ready_time;
    return p;
  }

  void handle(PresEnd& in, TimeMs t, std::vector<Outbound>& out) {
    const auto& seg = scheduled_.at(in.utterance_id);
    session_.machine(in.receiver).apply(StageTrigger::PresentationEnd);
    presenting_.erase(in.receiver);
    log_.append(event(EventKind::SynthesizedVideo, in.receiver, seg.utterance_id, *seg.presentation_start, t,
                      synth_payload(seg)));
    emit(out, in.receiver, WireType::SynthesizedEnd, Json{{"utt", seg.utterance_id}});
    const auto& st = utts_.at(seg.utterance_id);
    if (st.translation && seg.source == TranslationSource::Machine)
      add_item(in.receiver, make_received_item(in.receiver, seg.utterance_id, st.utterance.text,
                                               st.translation->translated_text, t));
  }

  void handle(InOverride& in, TimeMs, std::vector<Outbound>&) {
    session_.participant(in.pid).visibility_override = in.on;
    batch_overrides_.insert(in.pid);
  }

  void handle(InAnswer& in, TimeMs t, std::vector<Outbound>& out) {
    auto it = prompts_.find(in.pid);
    if (it == prompts_.end() || it->second.item.id != in.item_id || t > it->second.deadline) {
      emit(out, in.pid, WireType::Error, Json{{"reason", "no pending prompt for item '" + in.item_id + "'"}});
      return;
    }
    Prompt prompt = it->second;
    prompts_.erase(it);
    const auto grade = grade_answer(prompt.item, in.answer, options_.correct_threshold);
    auto& list = items_[session_.index_of(in.pid)];
    LearningItem updated = prompt.item;
    for (auto& item : list)
      if (item.id == prompt.item.id) {
        item = update_box(item, grade.correct, t);
        updated = item;
      }
    log_.append(event(EventKind::LearningItemShown, in.pid, prompt.item.source_utterance_id, prompt.shown, t,
                      shown_payload(prompt.item)));
    Json a;
    a["item"] = prompt.item.id;
    a["answer"] = in.answer;
    a["expected"] = prompt.item.foreign_text;
    a["similarity"] = grade.similarity;
    a["correct"] = grade.correct;
    a["box_before"] = prompt.item.box;
    a["box_after"] = updated.box;
    a["scored"] = true;
    log_.append(event(EventKind::LearningAnswer, in.pid, prompt.item.source_utterance_id, prompt.shown, t, a));
    session_.machine(in.pid).apply(StageTrigger::LearningDone);
    emit(out, in.pid, WireType::LearningAnswer,
         Json{{"item", prompt.item.id}, {"similarity", grade.similarity}, {"correct", grade.correct}, {"box", updated.box}});
  }

  void handle(PromptExpire& in, TimeMs t, std::vector<Outbound>& out) {
    auto it = prompts_.find(in.pid);
    if (it == prompts_.end() || it->second.serial != in.serial) return;
    // an ignored item waits one box interval before it is offered again
    for (auto& item : items_[session_.index_of(in.pid)])
      if (item.id == it->second.item.id) item.due_at = t + box_interval_ms(item.box);
    end_prompt(in.pid, t, "expired", out);
  }

  void handle(InClose& in, TimeMs t, std::vector<Outbound>&) {
    close_requests_.insert(in.pid);
    if (close_requests_.size() == 2 && !closing_) {
      closing_ = true;
      close_requested_at_ = t;
    }
  }

  // -------------------------------------------------------------------------
  // Learning

  static Json shown_payload(const LearningItem& item) {
    Json p;
    p["item"] = item.id;
    p["kind"] = std::string(to_string(item.prompt_kind));
    p["direction"] = std::string(to_string(item.direction));
    p["native"] = item.native_text;
    p["foreign"] = item.foreign_text;
    p["box"] = item.box;
    return p;
  }

  void add_item(const std::string& pid, LearningItem item) {
    auto& seen = seen_foreign_[session_.index_of(pid)];
    if (seen.insert(normalize_answer(item.foreign_text)).second) items_[session_.index_of(pid)].push_back(std::move(item));
  }

  void grade_practice(const Utterance& u, TimeMs t, std::vector<Outbound>& out) {
    auto& list = items_[session_.index_of(u.speaker)];
    Json a;
    a["answer"] = u.text;
    auto match = best_match(list, u.text);
    if (match) {
      auto& item = list[match->first];
      const auto grade = grade_text(u.text, item.foreign_text, options_.correct_threshold);
      a["item"] = item.id;
      a["expected"] = item.foreign_text;
      a["similarity"] = grade.similarity;
      a["correct"] = grade.correct;
      a["box_before"] = item.box;
      item = update_box(item, grade.correct, t);
      a["box_after"] = item.box;
      a["scored"] = true;
    } else {
      a["item"] = nullptr;
      a["expected"] = nullptr;
      a["similarity"] = 0.0;
      a["correct"] = false;
      a["scored"] = false;
    }
    log_.append(event(EventKind::LearningAnswer, u.speaker, u.id, u.capture_start, u.capture_end, a));
    Json reply = a;
    reply["utt"] = u.id;
    emit(out, u.speaker, WireType::LearningAnswer, std::move(reply));
  }

  void end_prompt(const std::string& pid, TimeMs t, const char* why, std::vector<Outbound>& out) {
    auto it = prompts_.find(pid);
    if (it == prompts_.end()) return;
    Prompt prompt = it->second;
    prompts_.erase(it);
    Json p = shown_payload(prompt.item);
    p[why] = true;
    log_.append(event(EventKind::LearningItemShown, pid, prompt.item.source_utterance_id, prompt.shown, t, p));
    session_.machine(pid).apply(StageTrigger::LearningDone);
    emit(out, pid, WireType::LearningPrompt, Json{{"item", prompt.item.id}, {"active", false}, {"reason", why}});
  }

  /// Earliest time at which `pid` could stop being free, given what is known.
  TimeMs free_bound(const std::string& pid, TimeMs external_horizon) const {
    TimeMs bound = external_horizon;
    if (closing_) bound = std::min(bound, close_requested_at_);
    const std::string& other = partner(pid);
    for (const auto& p : queue_) {
      if (p.t >= bound) break;
      if (p.external) {
        bound = p.t;
        break;
      }
      if (const auto* s = std::get_if<PresStart>(&p.what); s && s->receiver == pid) {
        bound = p.t;
        break;
      }
      if (const auto* c = std::get_if<Completion>(&p.what)) {
        const std::string& utt = std::visit([](const auto& o) -> const std::string& { return o.utterance_id; }, c->outcome);
        auto it = utts_.find(utt);
        if (it != utts_.end() && it->second.utterance.speaker == other && !it->second.utterance.practice) {
          bound = p.t;
          break;
        }
      }
    }
    if (auto held = planners_.count(pid) ? planners_.at(pid).earliest_held_ready() : std::nullopt)
      bound = std::min(bound, *held);
    return bound;
  }

  void offer_learning(TimeMs t, TimeMs external_horizon, std::vector<Outbound>& out) {
    if (closing_) return;
    PickParams params{options_.speech_rate_ms_per_char, options_.answer_allowance_ms};
    for (const auto& part : session_.participants()) {
      const auto& pid = part.id;
      const auto& m = session_.machine(pid);
      if (prompts_.contains(pid) || m.speaking() || m.viewing() || m.learning()) continue;
      const TimeMs bound = free_bound(pid, external_horizon);
      if (bound - t < options_.min_window_ms) continue;
      auto& list = items_[session_.index_of(pid)];
      auto idx = pick_item(list, FreeWindow{pid, t, bound}, t, params);
      if (!idx) continue;
      const auto& item = list[*idx];
      Prompt prompt{item, t, t + exercise_ms(item, params), next_serial_++};
      session_.machine(pid).apply(StageTrigger::LearningShown);
      push(prompt.deadline, kPromptExpire, PromptExpire{pid, prompt.serial}, false);
      Json p = shown_payload(item);
      p["active"] = true;
      p["deadline"] = prompt.deadline;
      emit(out, pid, WireType::LearningPrompt, std::move(p));
      prompts_[pid] = std::move(prompt);
    }
  }

  // -------------------------------------------------------------------------
  // Commit

  VisState visibility_of(const std::string& pid) const {
    const bool remote_viewing = [&] {
      auto it = presenting_.find(partner(pid));
      return it != presenting_.end() && scheduled_.at(it->second).speaker == pid;
    }();
    const bool override_on = session_.participant(pid).visibility_override;
    VisState v;
    v.visible = visibility_state(remote_viewing, override_on);
    if (remote_viewing)
      v.cause = VisibilityCause::SynthesizedPresentation;
    else if (override_on)
      v.cause = VisibilityCause::ManualOverride;
    return v;
  }

  static Json vis_payload(const VisState& v) {
    return Json{{"visible", v.visible}, {"cause", v.cause ? Json(std::string(to_string(*v.cause))) : Json(nullptr)}};
  }

  std::string aux_reason(const std::string& pid) const {
    const std::string& other = partner(pid);
    if (auto it = captures_.find(other); it != captures_.end() && !it->second.practice) return "remote_speaking";
    if (session_.machine(pid).pipeline() > 0) return "translating";
    return "none";
  }

  void commit_stages(TimeMs t, std::vector<Outbound>& out) {
    for (const auto& part : session_.participants()) {
      auto& m = session_.machine(part.id);
      const Stage before = m.committed();
      if (auto closed = m.commit(t))
        log_.append(event(EventKind::StageChange, part.id, std::nullopt, closed->t_start, closed->t_end,
                          Json{{"stage", std::string(to_string(closed->stage))}}));
      if (m.committed() != before)
        emit(out, part.id, WireType::StageUpdate, Json{{"stage", std::string(to_string(m.committed()))}});
    }
  }

  void commit_visibility(TimeMs t, std::vector<Outbound>& out) {
    for (const auto& part : session_.participants()) {
      auto& cur = vis_[part.id];
      VisState next = visibility_of(part.id);
      const bool changed = !(next == cur);
      if (changed) {
        if (t > cur.since)
          log_.append(event(EventKind::VisibilityChange, part.id, std::nullopt, cur.since, t, vis_payload(cur)));
        next.since = t;
        cur = next;
      }
      if (changed || batch_overrides_.contains(part.id))
        emit(out, part.id, WireType::VisibilityUpdate, vis_payload(cur));
    }
  }

  void commit_aux(std::vector<Outbound>& out) {
    for (const auto& part : session_.participants()) {
      auto reason = aux_reason(part.id);
      if (reason != aux_[part.id]) {
        aux_[part.id] = reason;
        emit(out, part.id, WireType::AuxiliaryPicture, Json{{"reason", reason}});
      }
    }
  }

  bool drained() const {
    if (async_inflight_ > 0 || !captures_.empty()) return false;
    for (const auto& [_, planner] : planners_)
      if (planner.pending() > 0) return false;
    for (const auto& p : queue_)
      if (!std::holds_alternative<PromptExpire>(p.what) && !std::holds_alternative<InAnswer>(p.what)) return false;
    return presenting_.empty();
  }

  void finalize(TimeMs t, TimeMs external_horizon, std::vector<Outbound>& out) {
    if (closing_ && drained()) {
      do_close(t, out);
      return;
    }
    offer_learning(t, external_horizon, out);
    commit_stages(t, out);
    commit_visibility(t, out);
    commit_aux(out);
  }

  void do_close(TimeMs t, std::vector<Outbound>& out) {
    for (auto& [speaker, cap] : captures_) {
      Json om;
      om["language"] = cap.translate ? session_.participant(speaker).native_language
                                     : session_.participant(speaker).foreign_language;
      om["translate"] = cap.translate;
      om["practice"] = cap.practice;
      om["interrupted"] = true;
      log_.append(event(EventKind::OriginalMedia, speaker, cap.utterance_id, cap.start, t, om));
      session_.machine(speaker).apply(StageTrigger::UtteranceEnd);
    }
    captures_.clear();
    for (auto& [receiver, utt] : presenting_) {
      const auto& seg = scheduled_.at(utt);
      const TimeMs start = *seg.presentation_start;
      if (seg.source == TranslationSource::Machine && start + std::min(seg.speech_duration_ms, seg.final_duration_ms) > t)
        log_.append(event(EventKind::TranslatedSpeech, receiver, utt, start, t,
                          Json{{"duration_ms", seg.speech_duration_ms}, {"played_ms", t - start}, {"interrupted", true}}));
      Json p = synth_payload(seg);
      p["final_ms"] = t - start;
      p["interrupted"] = true;
      log_.append(event(EventKind::SynthesizedVideo, receiver, utt, start, t, p));
      session_.machine(receiver).apply(StageTrigger::PresentationEnd);
    }
    presenting_.clear();
    std::vector<std::string> prompted;
    for (const auto& [pid, _] : prompts_) prompted.push_back(pid);
    for (const auto& pid : prompted) end_prompt(pid, t, "expired", out);

    commit_stages(t, out);
    for (const auto& part : session_.participants()) {
      if (auto closed = session_.machine(part.id).close(t))
        log_.append(event(EventKind::StageChange, part.id, std::nullopt, closed->t_start, closed->t_end,
                          Json{{"stage", std::string(to_string(closed->stage))}}));
      auto& v = vis_[part.id];
      if (t > v.since)
        log_.append(event(EventKind::VisibilityChange, part.id, std::nullopt, v.since, t, vis_payload(v)));
      v.since = t;
    }
    log_.append(event(EventKind::SessionClosed, "", std::nullopt, t, t, Json{{"session_end", t}}));
    closed_ = true;
    queue_.clear();
    for (const auto& part : session_.participants())
      emit(out, part.id, WireType::MetricsSnapshot, metrics_to_json(compute_metrics(log_.view(), part.id, options_.incentive)));
  }

  Session session_;
  EngineOptions options_;
  Translator translator_;
  EventLog log_;

  std::set<Pending> queue_;
  std::uint64_t next_order_ = 0;
  TimeMs now_ = 0;
  bool closing_ = false;
  bool closed_ = false;
  TimeMs close_requested_at_ = 0;
  std::set<std::string> close_requests_;
  int async_inflight_ = 0;

  std::map<std::string, TimeMs> known_utterances_;  // id -> capture start
  std::map<std::string, Capture> captures_;
  std::map<std::string, UttState> utts_;
  SegmentBuffer buffer_;
  std::map<std::string, PresentationPlanner> planners_;
  std::map<std::string, ReceiverQueue> receiver_queues_;
  std::map<std::string, SynthesizedSegment> scheduled_;
  std::map<std::string, std::string> presenting_;  // receiver -> utterance

  std::array<std::vector<LearningItem>, 2> items_;
  std::array<std::set<std::string>, 2> seen_foreign_;
  std::map<std::string, Prompt> prompts_;
  std::uint64_t next_serial_ = 1;

  std::map<std::string, VisState> vis_;
  std::map<std::string, std::string> aux_;
  std::set<std::string> batch_overrides_;
};

}  // namespace talklearn
