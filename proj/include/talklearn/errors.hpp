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

#include <cstddef>
#include <stdexcept>
#include <string>

namespace talklearn {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid session or component configuration.
struct ConfigError : Error {
  using Error::Error;
};

/// A timestamp moved backwards relative to already-committed state.
struct TimingError : Error {
  using Error::Error;
};

/// Structurally invalid input (trace, timeline, segment set).
struct ValidationError : Error {
  using Error::Error;
};

struct BufferError : Error {
  using Error::Error;
};

struct AlignError : Error {
  using Error::Error;
};

struct ScheduleError : Error {
  using Error::Error;
};

struct TranslationError : Error {
  using Error::Error;
};

struct LearningError : Error {
  using Error::Error;
};

/// Rejected append (closed log, inverted interval).
struct LogError : Error {
  using Error::Error;
};

/// Malformed serialized input. `line` is 1-based; 0 when not line oriented.
struct ParseError : Error {
  ParseError(std::size_t line, const std::string& what)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line(line) {}
  std::size_t line;
};

}  // namespace talklearn
