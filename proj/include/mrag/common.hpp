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

#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace mrag {

using Json = nlohmann::json;

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  IoError(std::filesystem::path path, const std::string& what)
      : Error("I/O error on " + path.string() + ": " + what), path_(std::move(path)) {}
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

enum class Language { en, zh };

std::string_view to_string(Language lang);
Language language_from_string(std::string_view s);

/// Lowercase hex SHA-256 of the given bytes.
std::string sha256_hex(std::string_view bytes);

std::string trim(std::string_view s);
std::string to_lower_ascii(std::string_view s);
bool iequals_ascii(std::string_view a, std::string_view b);

/// Truncates to at most `max_bytes` without splitting a UTF-8 sequence.
std::string utf8_clip(std::string_view s, std::size_t max_bytes);

std::string read_file(const std::filesystem::path& path);

/// Writes via a temporary sibling file and rename, so readers never observe
/// a partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

// Line records: one JSON object per line, UTF-8, keys serialized in sorted
// order so the same record always produces the same bytes.
std::string to_line(const Json& record);
std::vector<Json> parse_line_records(std::string_view text, const std::string& origin);
std::vector<Json> read_line_records(const std::filesystem::path& path);
void write_line_records(const std::filesystem::path& path, const std::vector<Json>& records);

/// Replaces every `{{name}}` in `tmpl` with the matching value.
std::string render_template(std::string_view tmpl,
                            const std::vector<std::pair<std::string, std::string>>& values);

/// Runs `body(i)` for i in [0, n) across OpenMP threads and rethrows the
/// first exception (lowest index) after the loop. `threads <= 0` uses the
/// OpenMP default; `threads == 1` runs serially on the caller.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body);

}  // namespace mrag
