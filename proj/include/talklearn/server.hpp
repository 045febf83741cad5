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
#include <chrono>
#include <fstream>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "config.hpp"
#include "core_model.hpp"
#include "engine.hpp"
#include "errors.hpp"
#include "remote_translation.hpp"
#include "simulate.hpp"
#include "telemetry.hpp"
#include "translation.hpp"
#include "wire.hpp"

namespace talklearn {

using ConnId = std::uint64_t;

struct Delivery {
  ConnId conn = 0;
  WireMessage message;
};

/// Owns every live session and turns client messages into engine inputs.
/// Not thread-safe: the caller serializes all calls (one logical owner).
///
/// Virtual clock: message times come from clients; the engine advances to
/// time t only once every participant promised (Advance) to send nothing
/// earlier than t, and stops after a LearningPrompt until that participant
/// answers or advances again. Wall clock: inputs are stamped with the
/// server time and tick() advances the engine.
class Hub {
 public:
  using TranslatorFactory = std::function<SessionEngine::Translator(const std::string& session, const Lexicon&)>;
  using ClosedHandler = std::function<void(const EventLog&)>;

  explicit Hub(Config config, TranslatorFactory factory = {}, ClosedHandler on_closed = {})
      : config_(std::move(config)), factory_(std::move(factory)), on_closed_(std::move(on_closed)) {
    if (config_.translation.mode == "mock") {
      if (config_.translation.lexicon_path.empty())
        throw ConfigError("translation.lexicon_path is required in mock mode");
      std::ifstream in(config_.translation.lexicon_path);
      if (!in) throw ConfigError("cannot open lexicon '" + config_.translation.lexicon_path + "'");
      try {
        lexicon_json_ = Json::parse(in);
      } catch (const Json::parse_error& e) {
        throw ConfigError("lexicon: " + std::string(e.what()));
      }
    }
    if (config_.server.clock == ClockMode::Virtual && !config_.simulation.seed)
      throw ConfigError("a seed is required for virtual-clock runs");
    if (!factory_) factory_ = default_factory();
  }

  const Config& config() const { return config_; }
  bool virtual_clock() const { return config_.server.clock == ClockMode::Virtual; }

  std::vector<Delivery> handle_text(ConnId conn, std::string_view text, TimeMs wall_now) {
    try {
      return handle(conn, WireMessage::parse(text), wall_now);
    } catch (const ParseError& e) {
      return {{conn, error_message("", std::nullopt, e.what())}};
    }
  }

  std::vector<Delivery> handle(ConnId conn, const WireMessage& msg, TimeMs wall_now) {
    std::vector<Delivery> out;
    if (msg.type == WireType::Join) {
      join(conn, msg, wall_now, out);
      return out;
    }
    auto c = conns_.find(conn);
    if (c == conns_.end()) return reply_error(conn, msg.session, "join a session first");
    auto [sid, pid] = c->second;
    if (!msg.session.empty() && msg.session != sid) return reply_error(conn, msg.session, "unknown session");
    auto s = sessions_.find(sid);
    if (s == sessions_.end() || !s->second.engine) return reply_error(conn, sid, "session has not started");
    auto& live = s->second;
    auto& engine = *live.engine;
    if (engine.closed()) return reply_error(conn, sid, "session is closed");

    TimeMs t = std::max(wall_now - live.epoch, engine.now());
    if (virtual_clock() && msg.type != WireType::Advance) {
      if (!msg.t) return reply_error(conn, sid, "message time is required with the virtual clock");
      t = *msg.t;
    }
    try {
      const auto& p = msg.payload;
      switch (msg.type) {
        case WireType::UtteranceStart:
          engine.utterance_start(pid, p.at("utt").get<std::string>(), p.value("translate", true),
                                 p.value("practice", false), t);
          break;
        case WireType::UtteranceEnd: {
          Utterance u;
          u.id = p.at("utt").get<std::string>();
          u.speaker = pid;
          u.text = p.at("text").get<std::string>();
          engine.utterance_end(std::move(u), t);
          break;
        }
        case WireType::VisibilityUpdate: engine.set_override(pid, p.at("visible").get<bool>(), t); break;
        case WireType::LearningAnswer:
          live.awaiting.erase(pid);
          engine.learning_answer(pid, p.at("item").get<std::string>(), p.value("answer", std::string{}), t);
          break;
        case WireType::Leave: engine.request_close(pid, t); break;
        case WireType::Advance:
          live.awaiting.erase(pid);
          if (p.contains("until") && !p["until"].is_null())
            live.horizon[pid] = std::max(live.horizon[pid], p["until"].get<TimeMs>());
          else
            live.horizon[pid] = kNever;
          break;
        default: return reply_error(conn, sid, "unexpected message type " + std::string(to_string(msg.type)));
      }
    } catch (const Json::exception& e) {
      return reply_error(conn, sid, std::string("bad payload: ") + e.what());
    } catch (const Error& e) {
      return reply_error(conn, sid, e.what());
    }
    if (virtual_clock()) pump(live, out);
    return out;
  }

  /// Wall clock: process everything due by `wall_now`.
  std::vector<Delivery> tick(TimeMs wall_now) {
    std::vector<Delivery> out;
    if (virtual_clock()) return out;
    for (auto& [sid, live] : sessions_) {
      if (!live.engine || live.engine->closed()) continue;
      const TimeMs rel = wall_now - live.epoch;
      while (auto next = live.engine->next_time()) {
        if (*next > rel) break;
        deliver(live, live.engine->step(kNever), out);
      }
      after_step(live);
    }
    reap();
    return out;
  }

  /// Result of an asynchronous translation backend.
  std::vector<Delivery> translation_complete(const std::string& session, TranslationOutcome outcome, TimeMs wall_now) {
    std::vector<Delivery> out;
    auto s = sessions_.find(session);
    if (s == sessions_.end() || !s->second.engine || s->second.engine->closed()) return out;
    auto& live = s->second;
    const TimeMs t = virtual_clock() ? live.engine->now() : wall_now - live.epoch;
    live.engine->translation_complete(std::move(outcome), std::max(t, live.engine->now()));
    if (virtual_clock()) pump(live, out);
    return out;
  }

  /// A dropped connection closes its session immediately.
  std::vector<Delivery> disconnect(ConnId conn, TimeMs wall_now) {
    std::vector<Delivery> out;
    auto c = conns_.find(conn);
    if (c == conns_.end()) return out;
    const auto [sid, pid] = c->second;
    conns_.erase(c);
    auto s = sessions_.find(sid);
    if (s == sessions_.end()) return out;
    auto& live = s->second;
    std::erase_if(live.members, [&](const auto& m) { return m.first == conn; });
    if (live.engine && !live.engine->closed()) {
      const TimeMs t = virtual_clock() ? live.engine->now() : wall_now - live.epoch;
      deliver(live, live.engine->force_close(std::max(t, live.engine->now())), out);
      after_step(live);
    }
    if (live.members.empty() || !live.engine) sessions_.erase(s);
    reap();
    return out;
  }

  /// Closes every running session (server shutdown).
  std::vector<Delivery> shutdown(TimeMs wall_now) {
    std::vector<Delivery> out;
    for (auto& [sid, live] : sessions_) {
      if (!live.engine || live.engine->closed()) continue;
      const TimeMs t = virtual_clock() ? live.engine->now() : wall_now - live.epoch;
      deliver(live, live.engine->force_close(std::max(t, live.engine->now())), out);
      after_step(live);
    }
    return out;
  }

  std::size_t active_sessions() const {
    std::size_t n = 0;
    for (const auto& [_, live] : sessions_)
      if (live.engine && !live.engine->closed()) ++n;
    return n;
  }

  /// Log of a session that closed, if any.
  const EventLog* closed_log(const std::string& session) const {
    auto it = closed_.find(session);
    return it == closed_.end() ? nullptr : &it->second;
  }

 private:
  struct Live {
    std::string id;
    std::vector<std::pair<ConnId, Participant>> members;
    std::unique_ptr<SessionEngine> engine;
    TimeMs epoch = 0;
    std::map<std::string, TimeMs> horizon;
    std::set<std::string> awaiting;
    bool reported = false;
  };

  TranslatorFactory default_factory() const {
    const Config& c = config_;
    if (c.translation.mode == "remote") {
      RemoteConfig rc{c.translation.endpoint, c.translation.timeout_ms, c.translation.retries,
                      c.translation.speech_rate_ms_per_char};
      return [rc](const std::string&, const Lexicon&) -> SessionEngine::Translator {
        // synchronous: completion is stamped at the request time plus the
        // measured round trip
        return [rc](const TranslationJob& job) -> std::optional<TranslationOutcome> {
          const auto t0 = std::chrono::steady_clock::now();
          RemoteTranslator rt(rc, [&] {
            return job.t_requested + std::chrono::duration_cast<std::chrono::milliseconds>(
                                         std::chrono::steady_clock::now() - t0)
                                         .count();
          });
          return rt(job);
        };
      };
    }
    const std::uint64_t seed = c.simulation.seed.value_or(0);
    return [c, seed](const std::string&, const Lexicon& lexicon) -> SessionEngine::Translator {
      auto mock = std::make_shared<MockTranslator>(lexicon, c.translation.latency, c.translation.speech_rate_ms_per_char,
                                                   util::mix_seed(seed, "translation"));
      return [mock](const TranslationJob& job) -> std::optional<TranslationOutcome> { return (*mock)(job); };
    };
  }

  std::vector<Delivery> reply_error(ConnId conn, const std::string& session, std::string reason) const {
    TimeMs t = 0;
    if (auto s = sessions_.find(session); s != sessions_.end() && s->second.engine) t = s->second.engine->now();
    return {{conn, error_message(session, t, std::move(reason))}};
  }

  static Json participant_json(const Participant& p) {
    return Json{{"id", p.id}, {"native", p.native_language}, {"foreign", p.foreign_language}};
  }

  void join(ConnId conn, const WireMessage& msg, TimeMs wall_now, std::vector<Delivery>& out) {
    auto fail = [&](std::string reason) { out.push_back({conn, error_message(msg.session, 0, std::move(reason))}); };
    if (conns_.contains(conn)) return fail("already joined");
    if (msg.session.empty()) return fail("session id is required");
    Participant p;
    try {
      const auto& j = msg.payload.contains("participant") ? msg.payload.at("participant") : msg.payload;
      p = Participant{j.at("id").get<std::string>(), j.at("native").get<std::string>(),
                      j.at("foreign").get<std::string>(), false};
    } catch (const Json::exception& e) {
      return fail(std::string("bad Join payload: ") + e.what());
    }
    if (closed_.contains(msg.session)) return fail("session is closed");
    auto& live = sessions_[msg.session];
    live.id = msg.session;
    if (live.members.size() >= 2) return fail("session full");
    if (!live.members.empty() && live.members.front().second.id == p.id) return fail("duplicate participant id");
    if (!live.members.empty()) {
      std::optional<Session> session;
      try {
        session = create_session(SessionConfig{msg.session, {live.members.front().second, p}});
      } catch (const Error& e) {
        return fail(e.what());
      }
      const auto& first = live.members.front().second;
      std::optional<Lexicon> lexicon;
      try {
        if (lexicon_json_) lexicon = Lexicon::from_json(*lexicon_json_, first.native_language, first.foreign_language);
      } catch (const Error& e) {
        return fail(std::string("lexicon: ") + e.what());
      }
      live.members.push_back({conn, p});
      conns_[conn] = {msg.session, p.id};
      live.epoch = wall_now;
      auto translator = factory_(msg.session, lexicon ? *lexicon : Lexicon{});
      live.engine = std::make_unique<SessionEngine>(std::move(*session), engine_options(config_, lexicon),
                                                    std::move(translator));
      for (const auto& m : live.members) live.horizon[m.second.id] = 0;
      Json ack;
      ack["status"] = "started";
      ack["participants"] = Json::array();
      for (const auto& m : live.members) ack["participants"].push_back(participant_json(m.second));
      ack["clock"] = std::string(to_string(config_.server.clock));
      for (const auto& m : live.members)
        out.push_back({m.first, make_message(WireType::Join, msg.session, 0, ack)});
      return;
    }
    live.members.push_back({conn, p});
    conns_[conn] = {msg.session, p.id};
    out.push_back({conn, make_message(WireType::Join, msg.session, 0,
                                      Json{{"status", "waiting"}, {"participants", {participant_json(p)}}})});
  }

  void deliver(Live& live, std::vector<Outbound> outbound, std::vector<Delivery>& out) {
    for (auto& o : outbound) {
      if (o.message.type == WireType::LearningPrompt && o.message.payload.value("active", false))
        live.awaiting.insert(o.to);
      for (const auto& m : live.members)
        if (m.second.id == o.to) out.push_back({m.first, std::move(o.message)});
    }
  }

  void pump(Live& live, std::vector<Delivery>& out) {
    auto& engine = *live.engine;
    while (live.awaiting.empty() && !engine.closed()) {
      TimeMs h = kNever;
      for (const auto& [_, v] : live.horizon) h = std::min(h, v);
      auto next = engine.next_time();
      if (!next || (h != kNever && *next >= h)) break;
      deliver(live, engine.step(h), out);
    }
    after_step(live);
  }

  void after_step(Live& live) {
    if (!live.engine || !live.engine->closed() || live.reported) return;
    live.reported = true;
    closed_.insert_or_assign(live.id, live.engine->log());
    if (on_closed_) on_closed_(live.engine->log());
  }

  void reap() {
    std::erase_if(sessions_, [](const auto& kv) { return kv.second.reported && kv.second.members.empty(); });
  }

  Config config_;
  TranslatorFactory factory_;
  ClosedHandler on_closed_;
  std::optional<Json> lexicon_json_;
  std::map<std::string, Live> sessions_;
  std::map<ConnId, std::pair<std::string, std::string>> conns_;  // conn -> (session, participant)
  std::map<std::string, EventLog> closed_;
};

}  // namespace talklearn
