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

#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "core_model.hpp"
#include "telemetry.hpp"

namespace talklearn {

struct Report {
  std::string session;
  std::vector<SessionMetrics> metrics;
  StagePartition stages;
};

/// Metrics and stage timelines for every participant named in the log.
inline Report build_report(const EventLog& log, const IncentiveConfig& incentive = {}) {
  Report r;
  r.session = log.session_id();
  if (r.session.empty() && !log.empty()) r.session = log.events().front().session;
  for (const auto& p : log_participants(log.view())) r.metrics.push_back(compute_metrics(log.view(), p, incentive));
  if (!log.empty()) r.stages = stage_intervals(log.view());
  return r;
}

inline Json report_to_json(const Report& r) {
  Json j;
  j["session"] = r.session;
  j["participants"] = Json::array();
  for (const auto& m : r.metrics) {
    Json pj = metrics_to_json(m);
    Json timeline = Json::array();
    if (auto it = r.stages.find(m.participant); it != r.stages.end())
      for (const auto& iv : it->second)
        timeline.push_back(Json{{"stage", std::string(to_string(iv.stage))}, {"t_start", iv.t_start}, {"t_end", iv.t_end}});
    pj["timeline"] = std::move(timeline);
    j["participants"].push_back(std::move(pj));
  }
  return j;
}

/// Plain-text table; a log without participants still prints one zero row.
inline std::string report_to_text(const Report& r) {
  std::ostringstream os;
  auto row = [&](const SessionMetrics& m) {
    char line[256];
    std::snprintf(line, sizeof line, "%-12s %6lld %9.1f %9.1f %9lld %9lld %9lld %9lld %9lld %9lld %6lld %8.1f %8.3f\n",
                  m.participant.empty() ? "-" : m.participant.c_str(), static_cast<long long>(m.messages_sent),
                  m.untranslated_pct, m.machine_pct,
                  static_cast<long long>(m.stage_durations.count(Stage::Speaking) ? m.stage_durations.at(Stage::Speaking) : 0),
                  static_cast<long long>(m.stage_durations.count(Stage::Waiting) ? m.stage_durations.at(Stage::Waiting) : 0),
                  static_cast<long long>(m.stage_durations.count(Stage::Viewing) ? m.stage_durations.at(Stage::Viewing) : 0),
                  static_cast<long long>(m.stage_durations.count(Stage::Learning) ? m.stage_durations.at(Stage::Learning) : 0),
                  static_cast<long long>(m.stage_durations.count(Stage::Idle) ? m.stage_durations.at(Stage::Idle) : 0),
                  static_cast<long long>(m.free_time_ms), static_cast<long long>(m.learning_items_attempted),
                  m.learning_accuracy, m.discount_ratio);
    os << line;
  };
  os << "session: " << (r.session.empty() ? "-" : r.session) << "\n";
  os << "participant    msgs  untrans%  machine%  speak_ms   wait_ms   view_ms  learn_ms   idle_ms   free_ms  items   acc%  discount\n";
  if (r.metrics.empty()) {
    SessionMetrics zero;
    for (Stage s : kAllStages) zero.stage_durations[s] = 0;
    row(zero);
  }
  for (const auto& m : r.metrics) row(m);
  for (const auto& m : r.metrics) {
    auto it = r.stages.find(m.participant);
    if (it == r.stages.end()) continue;
    os << "\ntimeline " << m.participant << ":\n";
    for (const auto& iv : it->second)
      os << "  " << iv.t_start << "-" << iv.t_end << "  " << to_string(iv.stage) << "\n";
  }
  return os.str();
}

}  // namespace talklearn
