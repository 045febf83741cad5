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

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "util.hpp"

namespace talklearn {

using Json = nlohmann::ordered_json;

/// Kinds of timeline entries. The first five are the conversation-log kinds
/// (original media, transcription, translation, translated speech,
/// synthesized video); the rest are session plumbing.
enum class EventKind {
  OriginalMedia,
  TranscribedText,
  TranslatedText,
  TranslatedSpeech,
  SynthesizedVideo,
  StageChange,
  VisibilityChange,
  LearningItemShown,
  LearningAnswer,
  TranslationFailed,
  QuestionnaireResponse,
  SessionClosed,
};

inline constexpr std::array<EventKind, 5> kConversationKinds = {
    EventKind::OriginalMedia, EventKind::TranscribedText, EventKind::TranslatedText,
    EventKind::TranslatedSpeech, EventKind::SynthesizedVideo};

inline constexpr std::array<std::pair<EventKind, std::string_view>, 12> kEventKindNames = {{
    {EventKind::OriginalMedia, "OriginalMedia"},
    {EventKind::TranscribedText, "TranscribedText"},
    {EventKind::TranslatedText, "TranslatedText"},
    {EventKind::TranslatedSpeech, "TranslatedSpeech"},
    {EventKind::SynthesizedVideo, "SynthesizedVideo"},
    {EventKind::StageChange, "StageChange"},
    {EventKind::VisibilityChange, "VisibilityChange"},
    {EventKind::LearningItemShown, "LearningItemShown"},
    {EventKind::LearningAnswer, "LearningAnswer"},
    {EventKind::TranslationFailed, "TranslationFailed"},
    {EventKind::QuestionnaireResponse, "QuestionnaireResponse"},
    {EventKind::SessionClosed, "SessionClosed"},
}};

inline std::string_view to_string(EventKind kind) {
  for (const auto& [k, name] : kEventKindNames)
    if (k == kind) return name;
  return "?";
}

inline std::optional<EventKind> event_kind_from_string(std::string_view name) {
  for (const auto& [k, n] : kEventKindNames)
    if (n == name) return k;
  return std::nullopt;
}

/// One entry of the append-only session log. `participant` is the addressee:
/// the speaker for capture/translation events, the receiver for presentation
/// events, empty for session-level events.
struct TimelineEvent {
  std::uint64_t seq = 0;
  std::string session;
  EventKind kind = EventKind::OriginalMedia;
  std::string participant;
  std::optional<std::string> utterance;
  TimeMs t_start = 0;
  TimeMs t_end = 0;
  Json payload = Json::object();

  bool operator==(const TimelineEvent&) const = default;
};

}  // namespace talklearn
