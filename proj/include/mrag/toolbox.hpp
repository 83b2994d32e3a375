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
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "mrag/action_grammar.hpp"
#include "mrag/common.hpp"
#include "mrag/dataset.hpp"
#include "mrag/gateway.hpp"

namespace mrag {

struct WebHit {
  std::string title;
  std::string description;
  std::optional<std::string> related_knowledge;
  std::string url;
  int rank = 0;
  bool operator==(const WebHit&) const = default;
};

struct ImageHit {
  ImageRef image;
  std::string caption;
  std::string source_url;
  int rank = 0;
  bool operator==(const ImageHit&) const = default;
};

using Hit = std::variant<WebHit, ImageHit>;

struct EvidenceBundle {
  ToolKind tool = ToolKind::web_search;
  std::string query;
  std::vector<Hit> hits;
  int k_requested = 0;
  std::string retrieved_at;
  double latency_ms = 0.0;

  Json to_json() const;
  static EvidenceBundle from_json(const Json& j);
  bool operator==(const EvidenceBundle&) const = default;
};

struct ContentParts {
  bool include_title = true;
  bool include_description = true;
  bool include_related = false;
  bool include_caption = true;
  bool include_image = true;

  bool any() const {
    return include_title || include_description || include_related || include_caption ||
           include_image;
  }
  /// Comma-separated flag names: title, description, related, caption, image.
  static ContentParts parse(std::string_view spec);
  std::string to_string() const;
  bool operator==(const ContentParts&) const = default;
};

inline constexpr int kDefaultTopK = 3;
/// "All" retrieved content: the backend's first result page.
inline constexpr int kAllTopK = 8;

/// Parses a top-k setting: a positive integer or "all".
int parse_top_k(std::string_view s);

class ToolboxError : public Error {
 public:
  enum class Kind { empty_query, unresolvable_image, bad_k };
  ToolboxError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Results as returned by a backend, before normalization.
template <typename H>
struct SearchResponse {
  std::vector<H> hits;
  double latency_ms = 0.0;
  std::string retrieved_at;
};

/// Search engine port. Implementations must be thread-safe and throw
/// BackendError on failure.
class SearchBackend {
 public:
  virtual ~SearchBackend() = default;
  virtual SearchResponse<WebHit> web_search(const std::string& query, int k) = 0;
  virtual SearchResponse<ImageHit> image_search_by_image(const ImageRef& image, int k) = 0;
  virtual SearchResponse<ImageHit> image_search_by_text(const std::string& query, int k) = 0;
};

struct ToolboxConfig {
  RetryPolicy retry;
  bool cache_enabled = false;
};

/// The three retrieval tools behind one dispatch surface. Normalizes hits:
/// drops empty web hits, collapses duplicate images by content hash,
/// truncates to k and renumbers ranks 1..n.
class Toolbox {
 public:
  Toolbox(std::shared_ptr<SearchBackend> backend, std::shared_ptr<ImageResolver> resolver,
          ToolboxConfig config = {});

  EvidenceBundle web_search(const std::string& query, int k = kDefaultTopK);
  EvidenceBundle image_search_by_image(const ImageRef& image, int k = kDefaultTopK);
  EvidenceBundle image_search_by_text(const std::string& query, int k = kDefaultTopK);

  /// Dispatches a planner step. For image_search_by_image `query` is an
  /// image slot resolved through `slots`.
  EvidenceBundle dispatch(ToolKind tool, const std::string& query, int k,
                          const std::map<std::string, ImageRef>& slots = {});

  std::size_t backend_calls() const { return backend_calls_.load(); }
  void set_sleeper(Sleeper sleeper) { sleeper_ = std::move(sleeper); }

 private:
  template <typename H, typename F>
  SearchResponse<H> with_retries(F&& call);
  std::optional<EvidenceBundle> cached(const std::string& key);
  void remember(const std::string& key, const EvidenceBundle& bundle);

  std::shared_ptr<SearchBackend> backend_;
  std::shared_ptr<ImageResolver> resolver_;
  ToolboxConfig config_;
  Sleeper sleeper_;
  std::atomic<std::size_t> backend_calls_{0};
  std::mutex mutex_;
  std::map<std::string, EvidenceBundle> cache_;
};

/// Image slot id of an image hit: "img:" plus the first 12 hex digits of its
/// content hash (or of the locator's hash when unresolved).
std::string image_slot_id(const ImageRef& image);

/// Deterministic text rendering of a bundle. Hits are numbered "[i]" and
/// dropped whole from the end to fit `budget` bytes (0 = unlimited). When
/// even the first hit does not fit it is clipped. Any truncation appends a
/// notice line.
std::string format_evidence(const EvidenceBundle& bundle, const ContentParts& parts,
                            std::size_t budget = 0);

inline constexpr std::string_view kNoResults = "(no results)";

}  // namespace mrag
