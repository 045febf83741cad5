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
#include <optional>
#include <string>
#include <string_view>

#include "errors.hpp"
#include "event.hpp"
#include "util.hpp"

namespace talklearn {

enum class WireType {
  Join,
  UtteranceStart,
  UtteranceEnd,
  Caption,
  SynthesizedStart,
  SynthesizedEnd,
  StageUpdate,
  VisibilityUpdate,
  AuxiliaryPicture,
  LearningPrompt,
  LearningAnswer,
  MetricsSnapshot,
  Error,
  // virtual-clock flow control
  Advance,
  Leave,
};

inline constexpr std::array<std::pair<WireType, std::string_view>, 15> kWireTypeNames = {{
    {WireType::Join, "Join"},
    {WireType::UtteranceStart, "UtteranceStart"},
    {WireType::UtteranceEnd, "UtteranceEnd"},
    {WireType::Caption, "Caption"},
    {WireType::SynthesizedStart, "SynthesizedStart"},
    {WireType::SynthesizedEnd, "SynthesizedEnd"},
    {WireType::StageUpdate, "StageUpdate"},
    {WireType::VisibilityUpdate, "VisibilityUpdate"},
    {WireType::AuxiliaryPicture, "AuxiliaryPicture"},
    {WireType::LearningPrompt, "LearningPrompt"},
    {WireType::LearningAnswer, "LearningAnswer"},
    {WireType::MetricsSnapshot, "MetricsSnapshot"},
    {WireType::Error, "Error"},
    {WireType::Advance, "Advance"},
    {WireType::Leave, "Leave"},
}};

inline std::string_view to_string(WireType t) {
  for (const auto& [k, n] : kWireTypeNames)
    if (k == t) return n;
  return "?";
}

inline std::optional<WireType> wire_type_from_string(std::string_view s) {
  for (const auto& [k, n] : kWireTypeNames)
    if (n == s) return k;
  return std::nullopt;
}

/// One JSON message on the framed channel:
/// {"type": ..., "session": ..., "t": ms | null, "payload": {...}}.
/// Server-to-client messages always carry the server time `t`.
struct WireMessage {
  WireType type = WireType::Error;
  std::string session;
  std::optional<TimeMs> t;
  Json payload = Json::object();

  Json to_json() const {
    Json j;
    j["type"] = std::string(to_string(type));
    j["session"] = session;
    j["t"] = t ? Json(*t) : Json(nullptr);
    j["payload"] = payload;
    return j;
  }

  std::string dump() const { return to_json().dump(); }

  static WireMessage from_json(const Json& j) {
    if (!j.is_object()) throw ParseError(0, "wire message must be a JSON object");
    WireMessage m;
    try {
      const auto name = j.at("type").get<std::string>();
      auto type = wire_type_from_string(name);
      if (!type) throw ParseError(0, "unknown message type '" + name + "'");
      m.type = *type;
      m.session = j.value("session", std::string{});
      if (auto it = j.find("t"); it != j.end() && !it->is_null()) {
        if (!it->is_number_integer()) throw ParseError(0, "t must be an integer");
        m.t = it->get<TimeMs>();
      }
      if (auto it = j.find("payload"); it != j.end() && !it->is_null()) {
        if (!it->is_object()) throw ParseError(0, "payload must be an object");
        m.payload = *it;
      }
    } catch (const Json::exception& e) {
      throw ParseError(0, e.what());
    }
    return m;
  }

  static WireMessage parse(std::string_view text) {
    try {
      return from_json(Json::parse(text));
    } catch (const Json::parse_error& e) {
      throw ParseError(0, std::string("malformed wire message: ") + e.what());
    }
  }
};

inline WireMessage make_message(WireType type, std::string session, std::optional<TimeMs> t, Json payload = Json::object()) {
  return WireMessage{type, std::move(session), t, std::move(payload)};
}

inline WireMessage error_message(std::string session, std::optional<TimeMs> t, std::string reason) {
  return make_message(WireType::Error, std::move(session), t, Json{{"reason", std::move(reason)}});
}

/// A message addressed to one participant.
struct Outbound {
  std::string to;
  WireMessage message;
};

}  // namespace talklearn
