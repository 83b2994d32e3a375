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

#include "mrag/toolbox.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <set>
#include <sstream>
#include <thread>

namespace mrag {

namespace {

Json hit_json(const Hit& hit) {
  if (const auto* w = std::get_if<WebHit>(&hit)) {
    Json j{{"kind", "web"}, {"title", w->title}, {"description", w->description},
           {"url", w->url},  {"rank", w->rank}};
    if (w->related_knowledge) j["related"] = *w->related_knowledge;
    return j;
  }
  const auto& h = std::get<ImageHit>(hit);
  Json j{{"kind", "image"}, {"image_url", h.image.locator}, {"caption", h.caption},
         {"source", h.source_url}, {"rank", h.rank}};
  if (h.image.content_hash) j["image_hash"] = *h.image.content_hash;
  return j;
}

Hit hit_from_json(const Json& j) {
  if (j.at("kind") == "web") {
    WebHit w;
    w.title = j.at("title").get<std::string>();
    w.description = j.at("description").get<std::string>();
    if (j.contains("related")) w.related_knowledge = j.at("related").get<std::string>();
    w.url = j.at("url").get<std::string>();
    w.rank = j.at("rank").get<int>();
    return w;
  }
  ImageHit h;
  h.image.locator = j.at("image_url").get<std::string>();
  if (j.contains("image_hash")) h.image.content_hash = j.at("image_hash").get<std::string>();
  h.caption = j.at("caption").get<std::string>();
  h.source_url = j.at("source").get<std::string>();
  h.rank = j.at("rank").get<int>();
  return h;
}

std::string require_query(const std::string& query) {
  std::string q = trim(query);
  if (q.empty()) throw ToolboxError(ToolboxError::Kind::empty_query, "search query is empty");
  return q;
}

void require_k(int k) {
  if (k < 1) throw ToolboxError(ToolboxError::Kind::bad_k, "k must be positive, got " + std::to_string(k));
}

std::vector<Hit> normalize(std::vector<WebHit> raw, int k) {
  std::vector<Hit> out;
  for (auto& h : raw) {
    if (static_cast<int>(out.size()) >= k) break;
    if (trim(h.title).empty() && trim(h.description).empty()) continue;
    h.rank = static_cast<int>(out.size()) + 1;
    out.emplace_back(std::move(h));
  }
  return out;
}

std::vector<Hit> normalize(std::vector<ImageHit> raw, int k) {
  std::vector<Hit> out;
  std::set<std::string> seen;
  for (auto& h : raw) {
    if (static_cast<int>(out.size()) >= k) break;
    const std::string key = h.image.content_hash.value_or("locator:" + h.image.locator);
    if (!seen.insert(key).second) continue;
    h.rank = static_cast<int>(out.size()) + 1;
    out.emplace_back(std::move(h));
  }
  return out;
}

std::string hit_block(const Hit& hit, std::size_t index, const ContentParts& parts) {
  std::vector<std::string> lines;
  if (const auto* w = std::get_if<WebHit>(&hit)) {
    if (parts.include_title && !w->title.empty()) lines.push_back("Title: " + w->title);
    if (parts.include_description && !w->description.empty())
      lines.push_back("Description: " + w->description);
    if (parts.include_related && w->related_knowledge && !w->related_knowledge->empty())
      lines.push_back("Related: " + *w->related_knowledge);
  } else {
    const auto& h = std::get<ImageHit>(hit);
    if (parts.include_image) lines.push_back("Image: " + image_slot_id(h.image));
    if (parts.include_caption && !h.caption.empty()) lines.push_back("Caption: " + h.caption);
  }
  std::string out = "[" + std::to_string(index) + "]";
  for (std::size_t i = 0; i < lines.size(); ++i) {
    out += i == 0 ? " " : "\n";
    out += lines[i];
  }
  return out;
}

std::string notice(std::size_t shown, std::size_t total, bool clipped) {
  std::string s = "\n[truncated: " + std::to_string(shown) + " of " + std::to_string(total) + " results";
  if (clipped) s += ", first clipped";
  return s + "]";
}

}  // namespace

Json EvidenceBundle::to_json() const {
  Json hs = Json::array();
  for (const auto& h : hits) hs.push_back(hit_json(h));
  return Json{{"tool", std::string(mrag::to_string(tool))},
              {"query", query},
              {"hits", std::move(hs)},
              {"k_requested", k_requested},
              {"retrieved_at", retrieved_at},
              {"latency_ms", latency_ms}};
}

EvidenceBundle EvidenceBundle::from_json(const Json& j) {
  EvidenceBundle b;
  auto tool = tool_from_string(j.at("tool").get<std::string>());
  if (!tool) throw Error("evidence bundle with unknown tool " + j.at("tool").dump());
  b.tool = *tool;
  b.query = j.at("query").get<std::string>();
  for (const auto& h : j.at("hits")) b.hits.push_back(hit_from_json(h));
  b.k_requested = j.at("k_requested").get<int>();
  b.retrieved_at = j.at("retrieved_at").get<std::string>();
  b.latency_ms = j.value("latency_ms", 0.0);
  return b;
}

ContentParts ContentParts::parse(std::string_view spec) {
  ContentParts p{false, false, false, false, false};
  std::string s(spec);
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item == "title") p.include_title = true;
    else if (item == "description") p.include_description = true;
    else if (item == "related") p.include_related = true;
    else if (item == "caption") p.include_caption = true;
    else if (item == "image") p.include_image = true;
    else throw Error("unknown content part '" + item + "'");
  }
  if (!p.any()) throw Error("content parts: at least one part must be enabled");
  return p;
}

std::string ContentParts::to_string() const {
  std::vector<std::string> names;
  if (include_title) names.push_back("title");
  if (include_description) names.push_back("description");
  if (include_related) names.push_back("related");
  if (include_caption) names.push_back("caption");
  if (include_image) names.push_back("image");
  std::string out;
  for (const auto& n : names) out += (out.empty() ? "" : ",") + n;
  return out;
}

int parse_top_k(std::string_view s) {
  if (iequals_ascii(s, "all")) return kAllTopK;
  int k = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), k);
  if (ec != std::errc() || ptr != s.data() + s.size() || k < 1) {
    throw ToolboxError(ToolboxError::Kind::bad_k, "top-k must be a positive integer or 'all', got '" +
                                                      std::string(s) + "'");
  }
  return k;
}

std::string image_slot_id(const ImageRef& image) {
  const std::string h = image.content_hash.value_or(sha256_hex(image.locator));
  return "img:" + h.substr(0, 12);
}

Toolbox::Toolbox(std::shared_ptr<SearchBackend> backend, std::shared_ptr<ImageResolver> resolver,
                 ToolboxConfig config)
    : backend_(std::move(backend)),
      resolver_(std::move(resolver)),
      config_(config),
      sleeper_([](double ms) {
        std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(ms));
      }) {
  if (!backend_) throw Error("toolbox requires a search backend");
}

template <typename H, typename F>
SearchResponse<H> Toolbox::with_retries(F&& call) {
  const int budget = config_.retry.budget;
  std::string last;
  for (int attempt = 0; attempt <= budget; ++attempt) {
    ++backend_calls_;
    try {
      return call();
    } catch (const BackendError& e) {
      if (!e.retryable()) throw;
      last = e.what();
      if (attempt == budget) break;
      sleeper_(std::min(config_.retry.max_delay_ms,
                        config_.retry.base_delay_ms * std::pow(2.0, attempt)));
    }
  }
  throw BackendError(BackendError::Kind::permanent,
                     "search failed after " + std::to_string(budget + 1) + " attempt(s): " + last);
}

std::optional<EvidenceBundle> Toolbox::cached(const std::string& key) {
  if (!config_.cache_enabled) return std::nullopt;
  std::lock_guard lock(mutex_);
  auto it = cache_.find(key);
  if (it == cache_.end()) return std::nullopt;
  EvidenceBundle b = it->second;
  b.latency_ms = 0.0;
  return b;
}

void Toolbox::remember(const std::string& key, const EvidenceBundle& bundle) {
  if (!config_.cache_enabled) return;
  std::lock_guard lock(mutex_);
  cache_.emplace(key, bundle);
}

EvidenceBundle Toolbox::web_search(const std::string& query, int k) {
  const std::string q = require_query(query);
  require_k(k);
  const std::string key = "web_search\n" + q + "\n" + std::to_string(k);
  if (auto hit = cached(key)) return *hit;
  auto resp = with_retries<WebHit>([&] { return backend_->web_search(q, k); });
  EvidenceBundle b{ToolKind::web_search, q, normalize(std::move(resp.hits), k), k, resp.retrieved_at,
                   std::max(0.0, resp.latency_ms)};
  remember(key, b);
  return b;
}

EvidenceBundle Toolbox::image_search_by_text(const std::string& query, int k) {
  const std::string q = require_query(query);
  require_k(k);
  const std::string key = "image_search_by_text\n" + q + "\n" + std::to_string(k);
  if (auto hit = cached(key)) return *hit;
  auto resp = with_retries<ImageHit>([&] { return backend_->image_search_by_text(q, k); });
  EvidenceBundle b{ToolKind::image_search_by_text, q, normalize(std::move(resp.hits), k), k,
                   resp.retrieved_at, std::max(0.0, resp.latency_ms)};
  remember(key, b);
  return b;
}

EvidenceBundle Toolbox::image_search_by_image(const ImageRef& image, int k) {
  require_k(k);
  if (trim(image.locator).empty() && !image.content_hash) {
    throw ToolboxError(ToolboxError::Kind::unresolvable_image, "image reference is empty");
  }
  ImageRef resolved = image;
  if (!resolved.content_hash) {
    if (!resolver_) {
      throw ToolboxError(ToolboxError::Kind::unresolvable_image,
                         "no image resolver for '" + image.locator + "'");
    }
    try {
      resolved = resolve_image(image, *resolver_);
    } catch (const Error& e) {
      throw ToolboxError(ToolboxError::Kind::unresolvable_image,
                         "cannot resolve image '" + image.locator + "': " + e.what());
    }
  }
  const std::string key = "image_search_by_image\n" + *resolved.content_hash + "\n" + std::to_string(k);
  if (auto hit = cached(key)) return *hit;
  auto resp = with_retries<ImageHit>([&] { return backend_->image_search_by_image(resolved, k); });
  EvidenceBundle b{ToolKind::image_search_by_image, resolved.locator,
                   normalize(std::move(resp.hits), k), k, resp.retrieved_at,
                   std::max(0.0, resp.latency_ms)};
  remember(key, b);
  return b;
}

EvidenceBundle Toolbox::dispatch(ToolKind tool, const std::string& query, int k,
                                 const std::map<std::string, ImageRef>& slots) {
  switch (tool) {
    case ToolKind::web_search: return web_search(query, k);
    case ToolKind::image_search_by_text: return image_search_by_text(query, k);
    case ToolKind::image_search_by_image: {
      auto it = slots.find(trim(query));
      if (it == slots.end()) {
        throw ToolboxError(ToolboxError::Kind::unresolvable_image, "unknown image slot '" + query + "'");
      }
      EvidenceBundle b = image_search_by_image(it->second, k);
      b.query = it->first;
      return b;
    }
  }
  throw Error("unreachable tool kind");
}

std::string format_evidence(const EvidenceBundle& bundle, const ContentParts& parts,
                            std::size_t budget) {
  if (bundle.hits.empty()) return std::string(kNoResults);
  std::vector<std::string> blocks;
  for (std::size_t i = 0; i < bundle.hits.size(); ++i) blocks.push_back(hit_block(bundle.hits[i], i + 1, parts));

  auto join = [&](std::size_t n) {
    std::string out;
    for (std::size_t i = 0; i < n; ++i) {
      if (i) out.push_back('\n');
      out += blocks[i];
    }
    return out;
  };
  std::string full = join(blocks.size());
  if (budget == 0 || full.size() <= budget) return full;

  const std::size_t total = blocks.size();
  for (std::size_t shown = total - 1; shown >= 1; --shown) {
    std::string text = join(shown) + notice(shown, total, false);
    if (text.size() <= budget) return text;
  }
  const std::string tail = notice(1, total, true);
  const std::string marker = "[1]";
  const std::size_t room = budget > tail.size() ? budget - tail.size() : 0;
  return utf8_clip(blocks.front(), std::max(room, marker.size())) + tail;
}

}  // namespace mrag
