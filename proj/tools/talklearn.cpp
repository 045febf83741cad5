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

// Command-line front end: serve, simulate, report, quiz, questionnaire.
#include <csignal>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>

#include <CLI11.hpp>

#include "talklearn/config.hpp"
#include "talklearn/learning.hpp"
#include "talklearn/live.hpp"
#include "talklearn/report.hpp"
#include "talklearn/simulate.hpp"
#include "talklearn/telemetry.hpp"
#include "talklearn/trace.hpp"

namespace {

using namespace talklearn;

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw Error("'" + path + "': " + e.what());
  }
}

void write_text(const std::optional<std::string>& path, const std::string& text) {
  if (!path || *path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(*path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + *path + "'");
  out << text;
}

int run_serve(const std::optional<std::string>& config_path, std::optional<int> port) {
  Config config = load_config(config_path);
  if (port) config.server.port = static_cast<std::uint16_t>(*port);

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);  // inherited by server threads

  auto server = serve(config);
  std::cerr << "listening on " << config.server.host << ":" << server->port() << " (clock "
            << to_string(config.server.clock) << ", logs in " << config.server.log_dir << ")\n";
  int sig = 0;
  sigwait(&signals, &sig);
  std::cerr << "shutting down\n";
  server->stop();
  server->wait();
  return 0;
}

int run_simulate(const std::string& trace_path, std::optional<std::uint64_t> seed,
                 const std::optional<std::string>& out, const std::optional<std::string>& config_path) {
  const auto sim = SimulationConfig::make(load_config(config_path), seed);
  const auto trace = Trace::load(trace_path);
  const auto log = simulate(trace, sim);
  write_text(out, serialize_log(log));
  return 0;
}

int run_report(const std::string& log_path, const std::optional<std::string>& json_out,
               const std::optional<std::string>& config_path) {
  const auto config = load_config(config_path);
  const auto report = build_report(read_log_file(log_path), config.learning.incentive);
  std::cout << report_to_text(report);
  if (json_out) write_text(json_out, report_to_json(report).dump(2) + "\n");
  return 0;
}

int run_quiz(const std::string& action, const std::string& log_path, std::size_t n, std::uint64_t seed,
             const std::string& participant, const std::optional<std::string>& answers_path,
             const std::optional<std::string>& out, const std::optional<std::string>& config_path) {
  const auto config = load_config(config_path);
  const auto log = read_log_file(log_path);
  const auto test = build_language_test(log.view(), participant, n, seed, config.learning.recognize_choices);
  if (action == "build") {
    write_text(out, test_to_json(test).dump(2) + "\n");
    return 0;
  }
  if (!answers_path) throw Error("quiz score needs --answers");
  const auto answers = answers_from_json(read_json_file(*answers_path), test);
  const auto result = score_test(test, answers, config.learning.correct_threshold);
  write_text(out, result_to_json(result).dump(2) + "\n");
  return 0;
}

int run_questionnaire(const std::string& log_path, const std::string& answers_path,
                      const std::optional<std::string>& questions_path) {
  auto log = read_log_file(log_path);
  const auto j = read_json_file(answers_path);
  QuestionnaireRecord record;
  std::set<std::string> known;
  if (questions_path) {
    const auto questions = read_json_file(*questions_path);
    for (const auto& q : questions.at("questions")) known.insert(q.at("id").get<std::string>());
  }
  try {
    record.participant = j.at("participant").get<std::string>();
    for (auto it = j.at("answers").begin(); it != j.at("answers").end(); ++it) {
      if (questions_path && !known.contains(it.key())) throw ValidationError("unknown question '" + it.key() + "'");
      record.answers.emplace_back(it.key(), it.value().get<int>());
    }
    if (j.contains("free_text") && j["free_text"].is_string()) record.free_text = j["free_text"].get<std::string>();
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("questionnaire answers: ") + e.what());
  }
  const auto seq = record_questionnaire(log, record);
  write_log_file(log_path, log);
  std::cout << "recorded questionnaire as seq " << seq << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"talklearn: delayed-translation conversation sessions with in-conversation learning"};
  app.require_subcommand(1);
  std::optional<std::string> config_path;
  app.add_option("--config", config_path, "JSON config file (TALKLEARN_CONFIG overrides)");

  auto* serve_cmd = app.add_subcommand("serve", "run the WebSocket session server");
  std::optional<int> port;
  serve_cmd->add_option("--port", port, "listen port (0 picks a free port)")->check(CLI::Range(0, 65535));
  serve_cmd->add_option("--config", config_path, "JSON config file");

  auto* sim_cmd = app.add_subcommand("simulate", "run a trace on the virtual clock and write its log");
  std::string trace_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  sim_cmd->add_option("--trace", trace_path, "trace JSON")->required()->check(CLI::ExistingFile);
  sim_cmd->add_option("--seed", seed, "random seed (required unless the config sets one)");
  sim_cmd->add_option("--out", out, "output .jsonl (default stdout)");
  sim_cmd->add_option("--config", config_path, "JSON config file");

  auto* report_cmd = app.add_subcommand("report", "print per-participant metrics for a log");
  std::string log_path;
  std::optional<std::string> json_out;
  report_cmd->add_option("--log", log_path, "session log (.jsonl)")->required()->check(CLI::ExistingFile);
  report_cmd->add_option("--json", json_out, "also write the report as JSON");
  report_cmd->add_option("--config", config_path, "JSON config file");

  auto* quiz_cmd = app.add_subcommand("quiz", "build or score a post-session language test");
  std::string quiz_action;
  std::size_t n_items = 6;
  std::uint64_t quiz_seed = 1;
  std::string participant;
  std::optional<std::string> answers_path;
  quiz_cmd->add_option("action", quiz_action, "build | score")->required()->check(CLI::IsMember({"build", "score"}));
  quiz_cmd->add_option("--log", log_path, "session log (.jsonl)")->required()->check(CLI::ExistingFile);
  quiz_cmd->add_option("--n", n_items, "number of items")->check(CLI::PositiveNumber);
  quiz_cmd->add_option("--seed", quiz_seed, "sampling seed");
  quiz_cmd->add_option("--participant", participant, "test taker (default: first participant in the log)");
  quiz_cmd->add_option("--answers", answers_path, "answers JSON (score)")->check(CLI::ExistingFile);
  quiz_cmd->add_option("--out", out, "output JSON (default stdout)");
  quiz_cmd->add_option("--config", config_path, "JSON config file");

  auto* q_cmd = app.add_subcommand("questionnaire", "append a questionnaire response to a closed log");
  std::string q_answers;
  std::optional<std::string> questions;
  q_cmd->add_option("--log", log_path, "session log (.jsonl), rewritten in place")->required()->check(CLI::ExistingFile);
  q_cmd->add_option("--answers", q_answers, "{participant, answers: {id: 1..5}, free_text?}")
      ->required()
      ->check(CLI::ExistingFile);
  q_cmd->add_option("--questions", questions, "question set to validate ids against")->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*serve_cmd) return run_serve(config_path, port);
    if (*sim_cmd) return run_simulate(trace_path, seed, out, config_path);
    if (*report_cmd) return run_report(log_path, json_out, config_path);
    if (*quiz_cmd)
      return run_quiz(quiz_action, log_path, n_items, quiz_seed, participant, answers_path, out, config_path);
    if (*q_cmd) return run_questionnaire(log_path, q_answers, questions);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
