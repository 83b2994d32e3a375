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

#include <string>
#include <string_view>
#include <vector>

#include "mrag/common.hpp"

namespace mrag {

enum class SegmentLanguage { en, zh, auto_detect };

/// Reference word segmentation rules.
///
/// All policies lowercase ASCII letters and treat whitespace and punctuation
/// (ASCII, general, CJK and fullwidth punctuation blocks) as separators.
///  - en: everything else forms whitespace/punctuation-delimited words.
///  - zh: each Han character is its own token; non-Han runs are kept whole.
///  - auto_detect: zh when the text contains any Han character, else en.
struct SegmenterPolicy {
  SegmentLanguage language = SegmentLanguage::auto_detect;
};

SegmenterPolicy policy_for(Language lang);

std::vector<std::string> segment(std::string_view text, const SegmenterPolicy& policy = {});

/// Decodes one UTF-8 code point starting at `pos` and advances it. Invalid
/// bytes decode as U+FFFD and consume one byte.
char32_t next_codepoint(std::string_view s, std::size_t& pos);

bool is_han(char32_t cp);
bool is_separator(char32_t cp);
bool contains_han(std::string_view text);

}  // namespace mrag
