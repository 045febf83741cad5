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

#include <atomic>
#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "client.hpp"
#include "config.hpp"
#include "errors.hpp"
#include "remote_translation.hpp"
#include "server.hpp"
#include "telemetry.hpp"

namespace talklearn {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace websocket = boost::beast::websocket;
using tcp = boost::asio::ip::tcp;

/// Path of the log written for a closed session.
inline std::filesystem::path session_log_path(const std::string& log_dir, const std::string& session) {
  return std::filesystem::path(log_dir) / (session + ".jsonl");
}

/// WebSocket front end for a Hub. All hub calls run on the single I/O
/// thread; blocking remote translations run on helper threads and post
/// their results back.
class LiveServer {
 public:
  explicit LiveServer(Config config)
      : config_(std::move(config)), acceptor_(ioc_), ticker_(ioc_), epoch_(std::chrono::steady_clock::now()) {
    hub_ = std::make_unique<Hub>(config_, translator_factory(), [this](const EventLog& log) { write_log(log); });
    beast::error_code ec;
    auto addr = net::ip::make_address(config_.server.host, ec);
    if (ec) throw ConfigError("server.host: " + ec.message());
    tcp::endpoint ep(addr, config_.server.port);
    acceptor_.open(ep.protocol(), ec);
    if (!ec) acceptor_.set_option(net::socket_base::reuse_address(true), ec);
    if (!ec) acceptor_.bind(ep, ec);
    if (!ec) acceptor_.listen(net::socket_base::max_listen_connections, ec);
    if (ec)
      throw Error("cannot listen on " + config_.server.host + ":" + std::to_string(config_.server.port) + ": " +
                  ec.message());
    std::filesystem::create_directories(config_.server.log_dir);
  }

  ~LiveServer() {
    stop();
    wait();
  }

  LiveServer(const LiveServer&) = delete;
  LiveServer& operator=(const LiveServer&) = delete;

  std::uint16_t port() const { return acceptor_.local_endpoint().port(); }
  const Config& config() const { return config_; }

  void start() {
    do_accept();
    if (!hub_->virtual_clock()) schedule_tick();
    thread_ = std::thread([this] { ioc_.run(); });
  }

  /// Closes all sessions (logs are flushed) and stops accepting.
  void stop() {
    if (stopping_.exchange(true)) return;
    net::post(ioc_, [this] {
      beast::error_code ec;
      acceptor_.close(ec);
      ticker_.cancel();
      route(hub_->shutdown(wall_now()));
      for (auto& [_, conn] : conns_) conn->close();
    });
  }

  void wait() {
    if (thread_.joinable()) thread_.join();
    std::vector<std::thread> helpers;
    {
      std::lock_guard lock(helpers_mu_);
      helpers.swap(helpers_);
    }
    for (auto& h : helpers) h.join();
  }

 private:
  class Conn : public std::enable_shared_from_this<Conn> {
   public:
    Conn(LiveServer& server, ConnId id, tcp::socket socket) : server_(server), id_(id), ws_(std::move(socket)) {}

    void start() {
      ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
      ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
        if (ec) return self->server_.dropped(self->id_);
        self->read();
      });
    }

    void send(std::string text) {
      outq_.push_back(std::move(text));
      if (outq_.size() == 1 && !writing_) write();
    }

    void close() {
      closing_ = true;
      if (!writing_ && outq_.empty()) do_close();
    }

   private:
    void read() {
      ws_.async_read(buf_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
        if (ec) return self->server_.dropped(self->id_);
        const auto text = beast::buffers_to_string(self->buf_.data());
        self->buf_.consume(self->buf_.size());
        self->server_.received(self->id_, text);
        self->read();
      });
    }

    void write() {
      writing_ = true;
      ws_.text(true);
      ws_.async_write(net::buffer(outq_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
        self->writing_ = false;
        if (ec) return self->server_.dropped(self->id_);
        self->outq_.pop_front();
        if (!self->outq_.empty())
          self->write();
        else if (self->closing_)
          self->do_close();
      });
    }

    void do_close() {
      if (closed_) return;
      closed_ = true;
      ws_.async_close(websocket::close_code::normal, [self = shared_from_this()](beast::error_code) {});
    }

    LiveServer& server_;
    ConnId id_;
    websocket::stream<beast::tcp_stream> ws_;
    beast::flat_buffer buf_;
    std::deque<std::string> outq_;
    bool writing_ = false;
    bool closing_ = false;
    bool closed_ = false;
  };

  TimeMs wall_now() const {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - epoch_).count();
  }

  Hub::TranslatorFactory translator_factory() {
    if (config_.translation.mode != "remote" || config_.server.clock == ClockMode::Virtual) return {};
    RemoteConfig rc{config_.translation.endpoint, config_.translation.timeout_ms, config_.translation.retries,
                    config_.translation.speech_rate_ms_per_char};
    return [this, rc](const std::string& session, const Lexicon&) -> SessionEngine::Translator {
      return [this, rc, session](const TranslationJob& job) -> std::optional<TranslationOutcome> {
        std::lock_guard lock(helpers_mu_);
        helpers_.emplace_back([this, rc, session, job] {
          RemoteTranslator rt(rc, [this, &job] { return job.t_requested; });
          auto outcome = rt(job);
          net::post(ioc_, [this, session, outcome = std::move(outcome)]() mutable {
            route(hub_->translation_complete(session, std::move(outcome), wall_now()));
          });
        });
        return std::nullopt;
      };
    };
  }

  void write_log(const EventLog& log) {
    try {
      write_log_file(session_log_path(config_.server.log_dir, log.session_id()).string(), log);
    } catch (const std::exception&) {
      // the session is over either way; nothing to report to
    }
  }

  void do_accept() {
    acceptor_.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      const ConnId id = next_id_++;
      auto conn = std::make_shared<Conn>(*this, id, std::move(socket));
      conns_[id] = conn;
      conn->start();
      do_accept();
    });
  }

  void schedule_tick() {
    ticker_.expires_after(std::chrono::milliseconds(config_.server.tick_ms));
    ticker_.async_wait([this](beast::error_code ec) {
      if (ec) return;
      route(hub_->tick(wall_now()));
      schedule_tick();
    });
  }

  void received(ConnId id, const std::string& text) { route(hub_->handle_text(id, text, wall_now())); }

  void dropped(ConnId id) {
    if (!conns_.erase(id)) return;
    route(hub_->disconnect(id, wall_now()));
  }

  void route(std::vector<Delivery> deliveries) {
    for (auto& d : deliveries)
      if (auto it = conns_.find(d.conn); it != conns_.end()) it->second->send(d.message.dump());
  }

  Config config_;
  net::io_context ioc_;
  tcp::acceptor acceptor_;
  net::steady_timer ticker_;
  std::chrono::steady_clock::time_point epoch_;
  std::unique_ptr<Hub> hub_;
  std::map<ConnId, std::shared_ptr<Conn>> conns_;
  ConnId next_id_ = 1;
  std::thread thread_;
  std::atomic<bool> stopping_{false};
  std::mutex helpers_mu_;
  std::vector<std::thread> helpers_;
};

/// Starts a server on its own I/O thread. Port 0 picks a free port.
inline std::unique_ptr<LiveServer> serve(const Config& config) {
  auto server = std::make_unique<LiveServer>(config);
  server->start();
  return server;
}

/// Drives a scripted client over a WebSocket connection until the session
/// reports its metrics, the server closes the connection, or `timeout`
/// passes. Returns false on timeout or transport failure before completion.
inline bool run_ws_client(const std::string& host, std::uint16_t port, ScriptedClient& client,
                          std::chrono::milliseconds timeout = std::chrono::seconds(30)) {
  net::io_context ioc;
  websocket::stream<beast::tcp_stream> ws(ioc);
  try {
    tcp::resolver resolver(ioc);
    beast::get_lowest_layer(ws).connect(resolver.resolve(host, std::to_string(port)));
    ws.handshake(host, "/");
  } catch (const boost::system::system_error&) {
    return false;
  }
  ws.text(true);

  std::deque<std::string> outq;
  bool writing = false;
  beast::flat_buffer buf;
  std::function<void()> write_next = [&] {
    if (writing || outq.empty()) return;
    writing = true;
    ws.async_write(net::buffer(outq.front()), [&](beast::error_code ec, std::size_t) {
      writing = false;
      if (ec) return ioc.stop();
      outq.pop_front();
      if (!outq.empty()) return write_next();
      if (client.done()) ws.async_close(websocket::close_code::normal, [](beast::error_code) {});
    });
  };
  std::function<void()> read_next = [&] {
    ws.async_read(buf, [&](beast::error_code ec, std::size_t) {
      if (ec) return;
      try {
        const auto msg = WireMessage::parse(beast::buffers_to_string(buf.data()));
        buf.consume(buf.size());
        for (const auto& reply : client.on_message(msg)) outq.push_back(reply.dump());
      } catch (const ParseError&) {
        buf.consume(buf.size());
      }
      if (client.done() && outq.empty() && !writing)
        ws.async_close(websocket::close_code::normal, [](beast::error_code) {});
      else
        write_next();
      read_next();
    });
  };
  outq.push_back(client.join().dump());
  write_next();
  read_next();
  ioc.run_for(timeout);
  return client.done();
}

}  // namespace talklearn
