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
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "core_model.hpp"
#include "errors.hpp"
#include "util.hpp"

namespace talklearn {

enum class MediaKind { Video, Audio };

inline std::string_view to_string(MediaKind k) { return k == MediaKind::Video ? "Video" : "Audio"; }

struct MediaSegment {
  std::string utterance_id;
  MediaKind kind = MediaKind::Video;
  TimeMs duration_ms = 0;
  std::string payload_ref;
  std::string checksum;
};

/// Synthetic capture of one utterance: equal-length video and audio tracks
/// with opaque references and a content hash over the reference metadata.
inline std::pair<MediaSegment, MediaSegment> capture_segments(const Utterance& u) {
  auto make = [&](MediaKind kind) {
    MediaSegment s;
    s.utterance_id = u.id;
    s.kind = kind;
    s.duration_ms = u.duration();
    s.payload_ref = "media:" + u.id + ":" + (kind == MediaKind::Video ? "video" : "audio");
    s.checksum = util::hex64(util::fnv1a64(s.payload_ref + "/" + std::to_string(s.duration_ms)));
    return s;
  };
  return {make(MediaKind::Video), make(MediaKind::Audio)};
}

/// Holds original media until its translation is ready.
class SegmentBuffer {
 public:
  void register_utterance(const std::string& utterance_id) { known_.insert(utterance_id); }

  void ingest(MediaSegment segment) {
    if (!known_.contains(segment.utterance_id))
      throw BufferError("unknown utterance '" + segment.utterance_id + "'");
    if (segment.duration_ms <= 0) throw BufferError("segment duration must be positive");
    auto& slot = held_[segment.utterance_id];
    auto& target = segment.kind == MediaKind::Video ? slot.video : slot.audio;
    if (target)
      throw BufferError("duplicate " + std::string(to_string(segment.kind)) + " segment for '" +
                        segment.utterance_id + "'");
    target = std::move(segment);
  }

  const MediaSegment* find(const std::string& utterance_id, MediaKind kind) const {
    auto it = held_.find(utterance_id);
    if (it == held_.end()) return nullptr;
    const auto& opt = kind == MediaKind::Video ? it->second.video : it->second.audio;
    return opt ? &*opt : nullptr;
  }

  /// Removes and returns both tracks; AlignError if either is missing.
  std::pair<MediaSegment, MediaSegment> take(const std::string& utterance_id) {
    auto it = held_.find(utterance_id);
    if (it == held_.end() || !it->second.video) throw AlignError("missing Video segment for '" + utterance_id + "'");
    if (!it->second.audio) throw AlignError("missing Audio segment for '" + utterance_id + "'");
    auto out = std::make_pair(std::move(*it->second.video), std::move(*it->second.audio));
    held_.erase(it);
    return out;
  }

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& [_, s] : held_) n += (s.video ? 1 : 0) + (s.audio ? 1 : 0);
    return n;
  }

 private:
  struct Slot {
    std::optional<MediaSegment> video;
    std::optional<MediaSegment> audio;
  };
  std::set<std::string> known_;
  std::map<std::string, Slot> held_;
};

enum class AlignPolicy { FreezePad, Trim };

inline std::string_view to_string(AlignPolicy p) { return p == AlignPolicy::FreezePad ? "FreezePad" : "Trim"; }

inline AlignPolicy align_policy_from_string(std::string_view s) {
  if (s == "FreezePad") return AlignPolicy::FreezePad;
  if (s == "Trim") return AlignPolicy::Trim;
  throw ConfigError("unknown alignment policy '" + std::string(s) + "'");
}

/// Translation stage output consumed by align(). Defined here rather than in
/// translation.hpp so the engine can depend on delay_match alone.
enum class TranslationSource { Machine, None };

inline std::string_view to_string(TranslationSource s) { return s == TranslationSource::Machine ? "Machine" : "None"; }

struct TranslationResult {
  std::string utterance_id;
  std::string transcribed_text;
  std::string translated_text;
  TimeMs speech_duration_ms = 0;
  TranslationSource source = TranslationSource::Machine;
  TimeMs t_requested = 0;
  TimeMs t_completed = 0;
};

struct SynthesizedSegment {
  std::string utterance_id;
  std::string speaker;
  std::string caption_text;
  TimeMs speech_duration_ms = 0;
  TimeMs video_duration_ms = 0;
  TimeMs final_duration_ms = 0;
  TimeMs pad_applied_ms = 0;
  AlignPolicy policy = AlignPolicy::FreezePad;
  TranslationSource source = TranslationSource::Machine;
  TimeMs ready_time = 0;
  TimeMs capture_start = 0;
  TimeMs capture_end = 0;
  std::optional<TimeMs> presentation_start;
  std::optional<TimeMs> presentation_end;
  bool practice = false;

  std::string ref() const { return "synth:" + utterance_id; }
};

/// Combines the delayed original media with its translation. The caption is
/// the whole translated text; the translated speech replaces the original
/// audio (for untranslated messages the original audio is kept).
inline SynthesizedSegment align(const Utterance& utterance, const MediaSegment& video, const MediaSegment& audio,
                                const TranslationResult& translation, AlignPolicy policy) {
  if (video.kind != MediaKind::Video || video.utterance_id != utterance.id)
    throw AlignError("missing Video segment for '" + utterance.id + "'");
  if (audio.kind != MediaKind::Audio || audio.utterance_id != utterance.id)
    throw AlignError("missing Audio segment for '" + utterance.id + "'");
  if (translation.translated_text.empty()) throw AlignError("empty translated text for '" + utterance.id + "'");

  SynthesizedSegment s;
  s.utterance_id = utterance.id;
  s.speaker = utterance.speaker;
  s.caption_text = translation.translated_text;
  s.speech_duration_ms =
      translation.source == TranslationSource::Machine ? translation.speech_duration_ms : audio.duration_ms;
  s.video_duration_ms = video.duration_ms;
  s.policy = policy;
  s.source = translation.source;
  s.ready_time = translation.t_completed;
  s.capture_start = utterance.capture_start;
  s.capture_end = utterance.capture_end;
  s.practice = utterance.practice;
  if (policy == AlignPolicy::FreezePad) {
    s.final_duration_ms = std::max(s.video_duration_ms, s.speech_duration_ms);
    s.pad_applied_ms = s.final_duration_ms - s.video_duration_ms;
  } else {
    s.final_duration_ms = std::min(s.video_duration_ms, s.speech_duration_ms);
    s.pad_applied_ms = 0;
  }
  return s;
}

/// Presentations already scheduled for one receiver.
struct ReceiverQueue {
  std::vector<SynthesizedSegment> scheduled;

  TimeMs busy_until() const { return scheduled.empty() ? 0 : *scheduled.back().presentation_end; }
};

/// Assigns the presentation interval: start at the later of readiness and the
/// end of the receiver's previous presentation.
inline SynthesizedSegment schedule_presentation(ReceiverQueue& queue, SynthesizedSegment synth) {
  if (synth.practice) throw ScheduleError("practice utterance '" + synth.utterance_id + "' is never presented");
  synth.presentation_start = std::max(synth.ready_time, queue.busy_until());
  synth.presentation_end = *synth.presentation_start + synth.final_duration_ms;
  queue.scheduled.push_back(synth);
  return synth;
}

/// Orders ready segments for one receiver: per-speaker capture order is
/// preserved; among speakers whose next segment is ready, the order is
/// (ready_time, capture_start, speaker id).
class PresentationPlanner {
 public:
  /// Declares an utterance that will eventually be presented, in capture order.
  void expect(const std::string& speaker, const std::string& utterance_id) {
    pending_[speaker].push_back({utterance_id, std::nullopt});
  }

  void ready(SynthesizedSegment synth) {
    auto& fifo = pending_[synth.speaker];
    for (auto& slot : fifo)
      if (slot.utterance_id == synth.utterance_id) {
        slot.segment = std::move(synth);
        return;
      }
    throw ScheduleError("segment '" + synth.utterance_id + "' was never expected");
  }

  /// Schedules every segment whose predecessors are already scheduled.
  std::vector<SynthesizedSegment> drain(ReceiverQueue& queue) {
    std::vector<SynthesizedSegment> out;
    for (;;) {
      const SynthesizedSegment* best = nullptr;
      std::string best_speaker;
      for (auto& [speaker, fifo] : pending_) {
        if (fifo.empty() || !fifo.front().segment) continue;
        const auto& cand = *fifo.front().segment;
        if (!best || std::tie(cand.ready_time, cand.capture_start, cand.speaker) <
                         std::tie(best->ready_time, best->capture_start, best->speaker)) {
          best = &cand;
          best_speaker = speaker;
        }
      }
      if (!best) break;
      auto& fifo = pending_[best_speaker];
      out.push_back(schedule_presentation(queue, std::move(*fifo.front().segment)));
      fifo.pop_front();
    }
    return out;
  }

  std::size_t pending() const {
    std::size_t n = 0;
    for (const auto& [_, f] : pending_) n += f.size();
    return n;
  }

  /// Earliest ready time among segments that are ready but held back.
  std::optional<TimeMs> earliest_held_ready() const {
    std::optional<TimeMs> best;
    for (const auto& [_, f] : pending_)
      for (const auto& slot : f)
        if (slot.segment && (!best || slot.segment->ready_time < *best)) best = slot.segment->ready_time;
    return best;
  }

 private:
  struct Slot {
    std::string utterance_id;
    std::optional<SynthesizedSegment> segment;
  };
  std::map<std::string, std::deque<Slot>> pending_;
};

// ---------------------------------------------------------------------------
// Voice activity

struct VadParams {
  double threshold = 0.1;
  std::size_t min_frames = 3;
  std::size_t hangover_frames = 5;
  TimeMs frame_period_ms = 20;
};

/// Half-open frame range [begin, end).
struct FrameInterval {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool operator==(const FrameInterval&) const = default;
};

/// Runs of frames with energy >= threshold lasting at least min_frames,
/// each extended by hangover_frames (clamped to the signal) and merged when
/// they touch or overlap.
inline std::vector<FrameInterval> detect_activity(std::span<const double> energies, double threshold,
                                                  std::size_t min_frames, std::size_t hangover_frames) {
  std::vector<FrameInterval> out;
  const std::size_t n = energies.size();
  std::size_t i = 0;
  while (i < n) {
    if (energies[i] < threshold) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && energies[j] >= threshold) ++j;
    if (j - i >= std::max<std::size_t>(min_frames, 1)) {
      FrameInterval run{i, std::min(n, j + hangover_frames)};
      if (!out.empty() && run.begin <= out.back().end)
        out.back().end = std::max(out.back().end, run.end);
      else
        out.push_back(run);
    }
    i = j;
  }
  return out;
}

inline std::vector<FrameInterval> detect_activity(std::span<const double> energies, const VadParams& p) {
  return detect_activity(energies, p.threshold, p.min_frames, p.hangover_frames);
}

// ---------------------------------------------------------------------------
// Free time

struct FreeWindow {
  std::string participant;
  TimeMs t_start = 0;
  TimeMs t_end = 0;

  TimeMs length() const { return t_end - t_start; }
  bool contains(TimeMs a, TimeMs b) const { return t_start <= a && b <= t_end; }
  bool operator==(const FreeWindow&) const = default;
};

inline constexpr TimeMs kDefaultMinWindowMs = 3000;

/// Maximal runs of consecutive Waiting/Idle intervals at least min_window_ms long.
inline std::vector<FreeWindow> free_windows(std::span<const StageInterval> intervals, TimeMs min_window_ms) {
  std::vector<FreeWindow> out;
  std::optional<FreeWindow> cur;
  auto flush = [&] {
    if (cur && cur->length() >= min_window_ms) out.push_back(*cur);
    cur.reset();
  };
  for (const auto& iv : intervals) {
    if (!is_free(iv.stage)) {
      flush();
      continue;
    }
    if (cur && cur->participant == iv.participant && cur->t_end == iv.t_start) {
      cur->t_end = iv.t_end;
    } else {
      flush();
      cur = FreeWindow{iv.participant, iv.t_start, iv.t_end};
    }
  }
  flush();
  return out;
}

}  // namespace talklearn
