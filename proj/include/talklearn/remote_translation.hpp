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

#include <chrono>
#include <functional>
#include <string>

#include <httplib.h>

#include "errors.hpp"
#include "event.hpp"
#include "translation.hpp"

namespace talklearn {

struct RemoteConfig {
  std::string endpoint;  // e.g. http://127.0.0.1:9000 or http://host/api
  TimeMs timeout_ms = 2000;
  int retries = 1;  // extra attempts after a timeout
  double speech_rate_ms_per_char = 60;
};

struct RemoteReply {
  bool ok = false;
  std::string text;
  std::string reason;  // timeout | malformed | http_status | connection
  int attempts = 0;
};

namespace detail {

inline std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
  const auto scheme = endpoint.find("://");
  const auto path_at = endpoint.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  if (path_at == std::string::npos) return {endpoint, ""};
  std::string path = endpoint.substr(path_at);
  while (!path.empty() && path.back() == '/') path.pop_back();
  return {endpoint.substr(0, path_at), path};
}

}  // namespace detail

/// POST {text, src, dst} to <endpoint>/translate and expect {text}. A timeout
/// is retried `retries` times; other failures are final.
inline RemoteReply remote_translate(const RemoteConfig& cfg, const std::string& text, const std::string& src,
                                    const std::string& dst) {
  if (cfg.endpoint.empty()) throw ConfigError("translation.endpoint is not configured");
  const auto [base, prefix] = detail::split_endpoint(cfg.endpoint);
  httplib::Client client(base);
  const auto secs = static_cast<time_t>(cfg.timeout_ms / 1000);
  const auto usecs = static_cast<time_t>((cfg.timeout_ms % 1000) * 1000);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);

  const std::string body = Json{{"text", text}, {"src", src}, {"dst", dst}}.dump();
  RemoteReply reply;
  for (int attempt = 0; attempt <= cfg.retries; ++attempt) {
    reply.attempts = attempt + 1;
    auto res = client.Post(prefix + "/translate", body, "application/json");
    if (!res) {
      const auto err = res.error();
      if (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout || err == httplib::Error::Write) {
        reply.reason = "timeout";
        continue;
      }
      reply.reason = "connection";
      return reply;
    }
    if (res->status < 200 || res->status >= 300) {
      reply.reason = "http_status";
      return reply;
    }
    try {
      auto j = Json::parse(res->body);
      if (!j.is_object() || !j.contains("text") || !j["text"].is_string()) {
        reply.reason = "malformed";
        return reply;
      }
      reply.ok = true;
      reply.reason.clear();
      reply.text = j["text"].get<std::string>();
      return reply;
    } catch (const Json::exception&) {
      reply.reason = "malformed";
      return reply;
    }
  }
  return reply;
}

/// Backend adapter producing engine outcomes. `clock` supplies session time
/// at completion (wall clock in live sessions).
class RemoteTranslator {
 public:
  RemoteTranslator(RemoteConfig cfg, std::function<TimeMs()> clock) : cfg_(std::move(cfg)), clock_(std::move(clock)) {}

  TranslationOutcome operator()(const TranslationJob& job) const {
    const auto transcript = transcribe(job.utterance);
    const auto reply = remote_translate(cfg_, transcript, job.src, job.dst);
    const TimeMs done = std::max(job.t_requested, clock_());
    if (!reply.ok || reply.text.empty())
      return TranslationFailure{job.utterance.id, reply.ok ? "malformed" : reply.reason, reply.attempts,
                                job.t_requested, done};
    TranslationResult r;
    r.utterance_id = job.utterance.id;
    r.transcribed_text = transcript;
    r.translated_text = reply.text;
    r.speech_duration_ms = synthesize_speech(reply.text, cfg_.speech_rate_ms_per_char);
    r.source = TranslationSource::Machine;
    r.t_requested = job.t_requested;
    r.t_completed = done;
    return r;
  }

 private:
  RemoteConfig cfg_;
  std::function<TimeMs()> clock_;
};

}  // namespace talklearn
