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

// Random inputs shared by the unit tests and the acceptance binary.

#include <random>
#include <string>
#include <vector>

#include "mrag/action_grammar.hpp"

namespace mrag::testing {

inline std::string random_text(std::mt19937_64& rng, int max_words = 8) {
  static const std::vector<std::string> words = {
      "Cillian", "Murphy", "latest", "film", "what",  "is",   "the",  "<",   ">",     "a<b",
      "x>y",     "2024",   "coach", "of",   "river", "城市", "主教练", "是谁", "？",   "(note)",
      "\"q\"",   "it's",   "ST",    "FINAL", "--",   "&amp;", "tab\there", "π", "e=mc2", "..."};
  std::uniform_int_distribution<int> n(1, max_words);
  std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1);
  std::string s;
  for (int i = n(rng); i > 0; --i) {
    if (!s.empty()) s += (rng() % 7 == 0) ? "\n" : " ";
    s += words[pick(rng)];
  }
  return s;
}

/// A random action that satisfies validate_action.
inline Action random_action(std::mt19937_64& rng) {
  for (;;) {
    Action a;
    if (rng() % 3 == 0) {
      FinalAction f;
      f.thought = rng() % 4 == 0 ? "" : random_text(rng);
      f.answer = random_text(rng, 4);
      a = f;
    } else {
      StepAction s;
      s.thought = random_text(rng);
      s.sub_question = random_text(rng);
      s.tool = all_tools()[rng() % 3];
      if (s.tool == ToolKind::image_search_by_image) {
        s.query = rng() % 2 ? "input_image" : "img:" + std::to_string(rng() % 1000000);
      } else {
        s.query = random_text(rng, 5);
      }
      a = s;
    }
    try {
      validate_action(a);
      return a;
    } catch (const InvariantViolation&) {
    }
  }
}

/// Random bytes, biased towards tag fragments so the parser's paths get
/// exercised.
inline std::string fuzz_bytes(std::mt19937_64& rng) {
  static const std::vector<std::string> fragments = {
      "<ST>", "</ST>", "<SQ>", "</SQ>", "<R>", "</R>", "<Q>", "</Q>", "<FINAL>", "</FINAL>",
      "<st>", "</", "<", ">", "web_search", "image_search_by_image", "input_image", "img:",
      " ", "\n", "\xE4\xB8", "\xFF", std::string(1, '\0')};
  std::uniform_int_distribution<int> len(0, 40);
  std::string s;
  for (int i = len(rng); i > 0; --i) {
    if (rng() % 2) {
      s += fragments[rng() % fragments.size()];
    } else {
      s.push_back(static_cast<char>(rng() & 0xFF));
    }
  }
  return s;
}

/// Text assembled from known tokens, so the expected segmentation is known
/// without running the segmenter.
struct TokenizedText {
  std::string text;
  std::vector<std::string> tokens;  // normalized, in order, with repeats
};

/// Random text under the en rules (latin words split by separators) or the
/// zh rules (Han characters glued together, latin runs kept whole). Letters
/// are randomly upper-cased; tokens are always lowercase.
inline TokenizedText random_tokenized(std::mt19937_64& rng, bool zh, int min_tokens = 1,
                                      int max_tokens = 10) {
  static const std::vector<std::string> latin = {"paris", "berlin",  "oppenheimer", "2023",
                                                 "film",  "the",     "coach",       "x1",
                                                 "river", "murphy",  "42",          "a",
                                                 "zenda", "mc2",     "head",        "of"};
  static const std::vector<std::string> han = {"城", "市", "主", "教", "练", "是", "谁",
                                               "电", "影", "河", "流", "年"};
  static const std::vector<std::string> seps = {" ",  "  ", ", ", "(",   ")",   "!",  "\t",
                                                "?",  ". ", "\n", "。", "，", "？", "、"};
  std::uniform_int_distribution<int> n(min_tokens, max_tokens);
  TokenizedText out;
  bool prev_latin = false;
  for (int i = n(rng); i > 0; --i) {
    const bool use_han = zh && rng() % 2 == 0;
    std::string tok = use_han ? han[rng() % han.size()] : latin[rng() % latin.size()];
    // Adjacent latin words need a separator; Han characters may touch anything.
    const bool need_sep = !out.text.empty() && !use_han && prev_latin;
    if (need_sep || (!out.text.empty() && rng() % 3 == 0)) out.text += seps[rng() % seps.size()];
    std::string shown = tok;
    for (char& c : shown) {
      if (c >= 'a' && c <= 'z' && rng() % 4 == 0) c = static_cast<char>(c - 'a' + 'A');
    }
    out.text += shown;
    out.tokens.push_back(tok);
    prev_latin = !use_han;
  }
  if (rng() % 2) out.text += seps[rng() % seps.size()];
  return out;
}

}  // namespace mrag::testing
