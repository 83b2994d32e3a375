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

#include "mrag/action_grammar.hpp"

#include <algorithm>
#include <cctype>
#include <map>

namespace mrag {

namespace {

constexpr std::array<std::string_view, 5> kTags = {"ST", "SQ", "R", "Q", "FINAL"};

struct Section {
  std::string content;
  ByteSpan span;
};

// Matches `<name>` or `</name>` at `pos`, case-insensitively. Returns the
// tag length, or 0.
std::size_t match_tag(std::string_view text, std::size_t pos, std::string_view name, bool closing) {
  std::size_t i = pos;
  if (i >= text.size() || text[i] != '<') return 0;
  ++i;
  if (closing) {
    if (i >= text.size() || text[i] != '/') return 0;
    ++i;
  }
  if (text.size() - i < name.size() + 1) return 0;
  if (!iequals_ascii(text.substr(i, name.size()), name)) return 0;
  i += name.size();
  if (text[i] != '>') return 0;
  return i + 1 - pos;
}

// Finds the next closing tag for `name` at or after `from`.
std::optional<std::pair<std::size_t, std::size_t>> find_close(std::string_view text, std::size_t from,
                                                              std::string_view name) {
  for (std::size_t p = text.find('<', from); p != std::string_view::npos; p = text.find('<', p + 1)) {
    if (std::size_t len = match_tag(text, p, name, true)) return std::make_pair(p, len);
  }
  return std::nullopt;
}

bool contains_any_tag(std::string_view s) {
  for (std::size_t p = s.find('<'); p != std::string_view::npos; p = s.find('<', p + 1)) {
    for (auto name : kTags) {
      if (match_tag(s, p, name, false) || match_tag(s, p, name, true)) return true;
    }
  }
  return false;
}

[[noreturn]] void fail(GrammarError::Kind kind, std::string detail, ByteSpan span,
                       const std::string& msg) {
  throw GrammarError(kind, std::move(detail), span,
                     msg + " at bytes [" + std::to_string(span.begin) + ", " +
                         std::to_string(span.end) + ")");
}

void check_field(std::string_view name, const std::string& value, bool required) {
  if (required && value.empty()) throw InvariantViolation(std::string(name) + " is empty");
  if (trim(value) != value) throw InvariantViolation(std::string(name) + " is not trimmed");
  if (contains_any_tag(value)) throw InvariantViolation(std::string(name) + " contains an action tag");
}

}  // namespace

std::string_view to_string(ToolKind tool) {
  switch (tool) {
    case ToolKind::web_search: return "web_search";
    case ToolKind::image_search_by_image: return "image_search_by_image";
    case ToolKind::image_search_by_text: return "image_search_by_text";
  }
  return "web_search";
}

std::optional<ToolKind> tool_from_string(std::string_view name) {
  for (ToolKind t : all_tools()) {
    if (iequals_ascii(name, to_string(t))) return t;
  }
  return std::nullopt;
}

const std::array<ToolKind, 3>& all_tools() {
  static const std::array<ToolKind, 3> tools = {ToolKind::web_search, ToolKind::image_search_by_image,
                                                ToolKind::image_search_by_text};
  return tools;
}

bool is_image_slot(std::string_view query) {
  if (query == "input_image") return true;
  if (query.size() <= 4 || query.substr(0, 4) != "img:") return false;
  return std::none_of(query.begin() + 4, query.end(),
                      [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; });
}

Action parse_action(std::string_view text, std::vector<std::string>* warnings) {
  std::map<std::string_view, Section> found;
  std::map<std::string_view, ByteSpan> unclosed;

  std::size_t pos = 0;
  while ((pos = text.find('<', pos)) != std::string_view::npos) {
    bool matched = false;
    for (auto name : kTags) {
      const std::size_t open_len = match_tag(text, pos, name, false);
      if (!open_len) continue;
      auto close = find_close(text, pos + open_len, name);
      if (!close) {
        unclosed.emplace(name, ByteSpan{pos, text.size()});
        break;
      }
      const ByteSpan span{pos, close->first + close->second};
      std::string content = trim(text.substr(pos + open_len, close->first - pos - open_len));
      if (!found.emplace(name, Section{std::move(content), span}).second && warnings) {
        warnings->push_back("duplicate <" + std::string(name) + "> section ignored at byte " +
                            std::to_string(pos));
      }
      pos = span.end;
      matched = true;
      break;
    }
    if (!matched) ++pos;
  }

  if (found.empty()) {
    if (!unclosed.empty()) {
      const auto& [name, span] = *unclosed.begin();
      fail(GrammarError::Kind::missing_section, std::string(name), span,
           "unterminated <" + std::string(name) + "> section");
    }
    fail(GrammarError::Kind::no_recognized_tags, "", ByteSpan{0, text.size()},
         "no recognized action tags");
  }

  auto missing = [&](std::string_view name) -> ByteSpan {
    auto it = unclosed.find(name);
    return it != unclosed.end() ? it->second : ByteSpan{text.size(), text.size()};
  };

  const auto final_it = found.find("FINAL");
  if (final_it != found.end()) {
    for (auto name : {"SQ", "R", "Q"}) {
      auto it = found.find(name);
      if (it == found.end()) continue;
      const ByteSpan span{std::min(final_it->second.span.begin, it->second.span.begin),
                          std::max(final_it->second.span.end, it->second.span.end)};
      fail(GrammarError::Kind::both_step_and_final, "", span,
           "reply mixes a retrieval step with a final answer");
    }
    if (final_it->second.content.empty()) {
      fail(GrammarError::Kind::missing_section, "FINAL", final_it->second.span,
           "empty <FINAL> section");
    }
    FinalAction a;
    if (auto st = found.find("ST"); st != found.end()) a.thought = st->second.content;
    a.answer = final_it->second.content;
    return a;
  }

  for (auto name : {"ST", "SQ", "R", "Q"}) {
    auto it = found.find(name);
    if (it == found.end()) {
      fail(GrammarError::Kind::missing_section, name, missing(name),
           "missing <" + std::string(name) + "> section");
    }
    if (it->second.content.empty()) {
      fail(GrammarError::Kind::missing_section, name, it->second.span,
           "empty <" + std::string(name) + "> section");
    }
  }

  StepAction a;
  a.thought = found.at("ST").content;
  a.sub_question = found.at("SQ").content;
  a.query = found.at("Q").content;
  const Section& r = found.at("R");
  auto tool = tool_from_string(r.content);
  if (!tool) fail(GrammarError::Kind::unknown_tool, r.content, r.span, "unknown tool '" + r.content + "'");
  a.tool = *tool;
  if (a.tool == ToolKind::image_search_by_image && !is_image_slot(a.query)) {
    fail(GrammarError::Kind::invalid_image_slot, a.query, found.at("Q").span,
         "image_search_by_image needs an image slot, got '" + a.query + "'");
  }
  return a;
}

void validate_action(const Action& action) {
  if (const auto* s = std::get_if<StepAction>(&action)) {
    check_field("thought", s->thought, true);
    check_field("sub_question", s->sub_question, true);
    check_field("query", s->query, true);
    if (s->tool == ToolKind::image_search_by_image && !is_image_slot(s->query)) {
      throw InvariantViolation("image_search_by_image query is not an image slot: " + s->query);
    }
  } else {
    const auto& f = std::get<FinalAction>(action);
    check_field("thought", f.thought, false);
    check_field("answer", f.answer, true);
  }
}

std::string render_action(const Action& action) {
  validate_action(action);
  std::string out;
  if (const auto* s = std::get_if<StepAction>(&action)) {
    out += "<ST>" + s->thought + "</ST>\n";
    out += "<SQ>" + s->sub_question + "</SQ>\n";
    out += "<R>" + std::string(to_string(s->tool)) + "</R>\n";
    out += "<Q>" + s->query + "</Q>";
  } else {
    const auto& f = std::get<FinalAction>(action);
    if (!f.thought.empty()) out += "<ST>" + f.thought + "</ST>\n";
    out += "<FINAL>" + f.answer + "</FINAL>";
  }
  return out;
}

}  // namespace mrag
