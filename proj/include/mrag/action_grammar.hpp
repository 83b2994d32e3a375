/*
 * Copyright 2026 The mrag Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mrag/common.hpp"

namespace mrag {

enum class ToolKind { web_search, image_search_by_image, image_search_by_text };

std::string_view to_string(ToolKind tool);
/// Case-insensitive; nullopt for names outside the tool set.
std::optional<ToolKind> tool_from_string(std::string_view name);
const std::array<ToolKind, 3>& all_tools();

struct StepAction {
  std::string thought;       // <ST>
  std::string sub_question;  // <SQ>
  ToolKind tool = ToolKind::web_search;  // <R>
  std::string query;         // <Q>
  bool operator==(const StepAction&) const = default;
};

struct FinalAction {
  std::string thought;  // <ST>, may be empty
  std::string answer;   // <FINAL>
  bool operator==(const FinalAction&) const = default;
};

using Action = std::variant<StepAction, FinalAction>;

inline bool is_final(const Action& a) { return std::holds_alternative<FinalAction>(a); }

/// Half-open byte range [begin, end) into the parsed text.
struct ByteSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool operator==(const ByteSpan&) const = default;
};

class GrammarError : public Error {
 public:
  enum class Kind {
    missing_section,
    unknown_tool,
    both_step_and_final,
    no_recognized_tags,
    invalid_image_slot,
  };
  GrammarError(Kind kind, std::string detail, ByteSpan span, const std::string& what)
      : Error(what), kind_(kind), detail_(std::move(detail)), span_(span) {}
  Kind kind() const { return kind_; }
  /// Section name for missing_section, tool text for unknown_tool.
  const std::string& detail() const { return detail_; }
  ByteSpan span() const { return span_; }

 private:
  Kind kind_;
  std::string detail_;
  ByteSpan span_;
};

class InvariantViolation : public Error {
 public:
  using Error::Error;
};

/// Image slot accepted by image_search_by_image: "input_image" or
/// "img:<id>" with a non-empty id free of whitespace.
bool is_image_slot(std::string_view query);

/// Parses one planner reply. Text outside recognized tags is ignored; a
/// repeated tag keeps its first occurrence and appends a warning.
Action parse_action(std::string_view text, std::vector<std::string>* warnings = nullptr);

/// Canonical rendering; throws InvariantViolation for actions that could
/// not round-trip (untrimmed or empty required fields, embedded tags, bad
/// image slot).
std::string render_action(const Action& action);

void validate_action(const Action& action);

}  // namespace mrag
