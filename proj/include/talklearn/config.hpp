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
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include "delay_match.hpp"
#include "errors.hpp"
#include "event.hpp"
#include "telemetry.hpp"
#include "translation.hpp"

namespace talklearn {

enum class ClockMode { Virtual, Wall };

inline std::string_view to_string(ClockMode m) { return m == ClockMode::Virtual ? "virtual" : "wall"; }

struct TranslationSettings {
  std::string mode = "mock";  // mock | remote
  std::string endpoint;
  std::string lexicon_path;
  double speech_rate_ms_per_char = 60;
  LatencyModel latency;
  TimeMs timeout_ms = 2000;
  int retries = 1;
};

struct DelayMatchSettings {
  AlignPolicy policy = AlignPolicy::FreezePad;
  TimeMs min_window_ms = kDefaultMinWindowMs;
  VadParams vad;
};

struct LearningSettings {
  double correct_threshold = 0.8;
  TimeMs answer_allowance_ms = 2000;
  std::size_t recognize_choices = 4;
  IncentiveConfig incentive;
};

struct ServerSettings {
  std::string host = "127.0.0.1";
  std::uint16_t port = 8765;
  std::string log_dir = "logs";
  ClockMode clock = ClockMode::Wall;
  TimeMs tick_ms = 10;
};

struct SimulationSettings {
  std::optional<std::uint64_t> seed;
  TimeMs tail_ms = 5000;
};

/// Whole-program configuration: sections translation, delay_match, learning,
/// server (and simulation). Missing keys keep their defaults.
struct Config {
  TranslationSettings translation;
  DelayMatchSettings delay_match;
  LearningSettings learning;
  ServerSettings server;
  SimulationSettings simulation;

  static Config from_json(const Json& j, const std::filesystem::path& base_dir = {}) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    Config c;
    try {
      if (auto it = j.find("translation"); it != j.end()) {
        const auto& t = *it;
        c.translation.mode = t.value("mode", c.translation.mode);
        if (c.translation.mode != "mock" && c.translation.mode != "remote")
          throw ConfigError("translation.mode must be \"mock\" or \"remote\"");
        c.translation.endpoint = t.value("endpoint", c.translation.endpoint);
        c.translation.lexicon_path = t.value("lexicon_path", c.translation.lexicon_path);
        if (!c.translation.lexicon_path.empty() && !base_dir.empty() &&
            std::filesystem::path(c.translation.lexicon_path).is_relative())
          c.translation.lexicon_path = (base_dir / c.translation.lexicon_path).lexically_normal().string();
        c.translation.speech_rate_ms_per_char = t.value("rate_ms_per_char", c.translation.speech_rate_ms_per_char);
        c.translation.timeout_ms = t.value("timeout_ms", c.translation.timeout_ms);
        c.translation.retries = t.value("retries", c.translation.retries);
        if (auto l = t.find("latency"); l != t.end()) {
          c.translation.latency.base_ms = l->value("base_ms", c.translation.latency.base_ms);
          c.translation.latency.per_char_ms = l->value("per_char_ms", c.translation.latency.per_char_ms);
          c.translation.latency.jitter_ms = l->value("jitter_ms", c.translation.latency.jitter_ms);
        }
        if (c.translation.mode == "remote" && c.translation.endpoint.empty())
          throw ConfigError("translation.endpoint is required in remote mode");
        if (!(c.translation.speech_rate_ms_per_char > 0)) throw ConfigError("translation.rate_ms_per_char must be > 0");
        if (c.translation.latency.base_ms < 0 || c.translation.latency.per_char_ms < 0 ||
            c.translation.latency.jitter_ms < 0)
          throw ConfigError("translation.latency values must be nonnegative");
      }
      if (auto it = j.find("delay_match"); it != j.end()) {
        const auto& d = *it;
        if (d.contains("policy")) c.delay_match.policy = align_policy_from_string(d["policy"].get<std::string>());
        c.delay_match.min_window_ms = d.value("min_window_ms", c.delay_match.min_window_ms);
        if (auto v = d.find("vad"); v != d.end()) {
          c.delay_match.vad.threshold = v->value("threshold", c.delay_match.vad.threshold);
          c.delay_match.vad.min_frames = v->value("min_frames", c.delay_match.vad.min_frames);
          c.delay_match.vad.hangover_frames = v->value("hangover_frames", c.delay_match.vad.hangover_frames);
          c.delay_match.vad.frame_period_ms = v->value("frame_period_ms", c.delay_match.vad.frame_period_ms);
          if (c.delay_match.vad.frame_period_ms <= 0) throw ConfigError("delay_match.vad.frame_period_ms must be > 0");
        }
      }
      if (auto it = j.find("learning"); it != j.end()) {
        const auto& l = *it;
        c.learning.correct_threshold = l.value("correct_threshold", c.learning.correct_threshold);
        c.learning.answer_allowance_ms = l.value("answer_allowance_ms", c.learning.answer_allowance_ms);
        c.learning.recognize_choices = l.value("recognize_choices", c.learning.recognize_choices);
        if (auto d = l.find("discount"); d != l.end()) {
          c.learning.incentive.coefficient = d->value("coefficient", c.learning.incentive.coefficient);
          c.learning.incentive.cap = d->value("cap", c.learning.incentive.cap);
        }
        if (c.learning.correct_threshold < 0 || c.learning.correct_threshold > 1)
          throw ConfigError("learning.correct_threshold must be in [0,1]");
        if (c.learning.recognize_choices < 2) throw ConfigError("learning.recognize_choices must be >= 2");
      }
      if (auto it = j.find("server"); it != j.end()) {
        const auto& s = *it;
        if (s.contains("tls")) throw ConfigError("server.tls is not supported; terminate TLS in a reverse proxy");
        c.server.host = s.value("host", c.server.host);
        c.server.port = s.value("port", c.server.port);
        c.server.log_dir = s.value("log_dir", c.server.log_dir);
        if (!base_dir.empty() && std::filesystem::path(c.server.log_dir).is_relative())
          c.server.log_dir = (base_dir / c.server.log_dir).lexically_normal().string();
        const auto clock = s.value("clock", std::string(to_string(c.server.clock)));
        if (clock == "virtual")
          c.server.clock = ClockMode::Virtual;
        else if (clock == "wall")
          c.server.clock = ClockMode::Wall;
        else
          throw ConfigError("server.clock must be \"virtual\" or \"wall\"");
        c.server.tick_ms = s.value("tick_ms", c.server.tick_ms);
      }
      if (auto it = j.find("simulation"); it != j.end()) {
        const auto& s = *it;
        if (s.contains("seed")) c.simulation.seed = s["seed"].get<std::uint64_t>();
        c.simulation.tail_ms = s.value("tail_ms", c.simulation.tail_ms);
      }
    } catch (const Json::exception& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    return c;
  }

  static Config load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    Json j;
    try {
      j = Json::parse(in);
    } catch (const Json::parse_error& e) {
      throw ConfigError("config '" + path + "': " + e.what());
    }
    return from_json(j, std::filesystem::path(path).parent_path());
  }
};

inline constexpr const char* kConfigEnv = "TALKLEARN_CONFIG";

/// TALKLEARN_CONFIG, when set and nonempty, takes precedence over `cli_path`.
inline std::optional<std::string> resolve_config_path(const std::optional<std::string>& cli_path) {
  if (const char* env = std::getenv(kConfigEnv); env && *env) return std::string(env);
  return cli_path;
}

inline Config load_config(const std::optional<std::string>& cli_path) {
  auto path = resolve_config_path(cli_path);
  return path ? Config::load(*path) : Config{};
}

}  // namespace talklearn
