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

#include <atomic>
#include <filesystem>
#include <random>
#include <string>

#include "mrag/common.hpp"
#include "mrag/gateway.hpp"

namespace mrag::testing {

inline Json sample_record(const std::string& id = "q1") {
  return Json{{"id", id},
              {"question_en", "Who is the current head coach of the team in this image?"},
              {"question_zh", "图中球队现任主教练是谁？"},
              {"image_url", "images/" + id + ".jpg"},
              {"answers", {"Jane Doe"}},
              {"domain", "sports_recreation"},
              {"answer_update_frequency", "fast"},
              {"reasoning_steps", ">2-hop"},
              {"needs_external_visual", "no"},
              {"golden_query", "head coach of Example FC"},
              {"last_verified", "2024-05-01"}};
}

/// Gateway settings without response caching.
inline GatewayConfig uncached() {
  GatewayConfig c;
  c.cache_enabled = false;
  return c;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("mrag-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace mrag::testing
