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

#include "mrag/http_backends.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>

#include "httplib.h"

namespace mrag {

Json HttpEndpoint::to_json() const {
  Json j{{"base_url", base_url}, {"path", path}, {"timeout_s", timeout_s}};
  if (api_key_env) j["api_key_env"] = *api_key_env;
  return j;
}

HttpEndpoint HttpEndpoint::from_json(const Json& j) {
  HttpEndpoint e;
  e.base_url = j.at("base_url").get<std::string>();
  e.path = j.value("path", "/");
  if (j.contains("api_key_env")) e.api_key_env = j.at("api_key_env").get<std::string>();
  e.timeout_s = j.value("timeout_s", 60.0);
  if (e.timeout_s <= 0) throw Error("endpoint timeout must be positive");
  return e;
}

std::string_view to_string(ImageTransport t) { return t == ImageTransport::url ? "url" : "base64"; }

ImageTransport image_transport_from_string(std::string_view s) {
  if (s == "url") return ImageTransport::url;
  if (s == "base64") return ImageTransport::base64;
  throw Error("unknown image transport '" + std::string(s) + "'");
}

BackendError::Kind classify_http_status(int status) {
  if (status == 429 || status >= 500) return BackendError::Kind::transient;
  return BackendError::Kind::permanent;
}

namespace {

std::string join_path(const std::string& base, const std::string& route) {
  if (base.empty() || base == "/") return "/" + route;
  return (base.back() == '/' ? base : base + "/") + route;
}

httplib::Headers auth_headers(const HttpEndpoint& e) {
  httplib::Headers h;
  if (e.api_key_env) {
    if (const char* key = std::getenv(e.api_key_env->c_str()); key && *key) {
      h.emplace("Authorization", std::string("Bearer ") + key);
    }
  }
  return h;
}

void set_timeouts(httplib::Client& client, double timeout_s) {
  const auto sec = static_cast<time_t>(timeout_s);
  const auto usec = static_cast<time_t>((timeout_s - std::floor(timeout_s)) * 1e6);
  client.set_connection_timeout(sec, usec);
  client.set_read_timeout(sec, usec);
  client.set_write_timeout(sec, usec);
}

// POSTs JSON and returns the parsed body, mapping failures to BackendError.
Json post_json(const HttpEndpoint& e, const std::string& path, const Json& body,
               double& latency_ms) {
  httplib::Client client(e.base_url);
  set_timeouts(client, e.timeout_s);
  const auto t0 = std::chrono::steady_clock::now();
  auto res = client.Post(path, auth_headers(e), body.dump(), "application/json");
  latency_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  if (!res) {
    const auto err = res.error();
    const auto kind = (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout)
                          ? BackendError::Kind::timeout
                          : BackendError::Kind::transient;
    throw BackendError(kind, "POST " + e.base_url + path + ": " + httplib::to_string(err));
  }
  if (res->status < 200 || res->status >= 300) {
    throw BackendError(classify_http_status(res->status),
                       "POST " + e.base_url + path + ": HTTP " + std::to_string(res->status));
  }
  try {
    return Json::parse(res->body);
  } catch (const Json::exception& ex) {
    throw BackendError(BackendError::Kind::permanent,
                       "POST " + e.base_url + path + ": malformed JSON reply: " + ex.what());
  }
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string mime_for(const std::string& bytes) {
  if (bytes.rfind("\x89PNG", 0) == 0) return "image/png";
  if (bytes.rfind("GIF8", 0) == 0) return "image/gif";
  if (bytes.rfind("RIFF", 0) == 0) return "image/webp";
  return "image/jpeg";
}

ImageHit image_hit_from(const Json& h) {
  ImageHit hit;
  hit.image.locator = h.at("image_url").get<std::string>();
  if (h.contains("image_hash") && h["image_hash"].is_string()) {
    hit.image.content_hash = h["image_hash"].get<std::string>();
  }
  hit.caption = h.value("caption", "");
  hit.source_url = h.value("source", h.value("source_url", ""));
  return hit;
}

template <typename H, typename F>
SearchResponse<H> read_hits(const Json& body, double latency_ms, F&& convert) {
  SearchResponse<H> out;
  out.latency_ms = latency_ms;
  out.retrieved_at = body.value("retrieved_at", utc_now());
  for (const auto& h : body.value("hits", Json::array())) out.hits.push_back(convert(h));
  return out;
}

}  // namespace

Json chat_request_body(const ChatRequest& request, ImageTransport transport,
                       ImageResolver* resolver) {
  Json messages = Json::array();
  for (const auto& m : request.conversation) {
    Json content = Json::array();
    for (const auto& part : m.parts) {
      if (const auto* t = std::get_if<TextPart>(&part)) {
        content.push_back({{"type", "text"}, {"text", t->text}});
        continue;
      }
      const auto& img = std::get<ImageRef>(part);
      std::string url = img.locator;
      if (transport == ImageTransport::base64) {
        if (!resolver) throw Error("base64 image transport needs an image resolver");
        const std::string bytes = resolver->fetch(img.locator);
        url = "data:" + mime_for(bytes) + ";base64," + httplib::detail::base64_encode(bytes);
      }
      content.push_back({{"type", "image_url"}, {"image_url", url}});
    }
    messages.push_back({{"role", std::string(to_string(m.role))}, {"content", std::move(content)}});
  }
  return Json{{"model", request.model_id},
              {"messages", std::move(messages)},
              {"temperature", request.params.temperature},
              {"max_tokens", request.params.max_tokens}};
}

BackendResponse parse_chat_response(const Json& body) {
  BackendResponse r;
  if (!body.contains("text") || !body["text"].is_string()) {
    throw BackendError(BackendError::Kind::permanent, "chat reply has no text field");
  }
  r.text = body["text"].get<std::string>();
  if (body.contains("usage") && body["usage"].is_object()) {
    const auto& u = body["usage"];
    r.usage = TokenUsage{u.value("input_tokens", std::int64_t{0}),
                         u.value("output_tokens", std::int64_t{0})};
  }
  return r;
}

HttpChatBackend::HttpChatBackend(HttpEndpoint endpoint, ImageTransport transport,
                                 std::shared_ptr<ImageResolver> resolver)
    : endpoint_(std::move(endpoint)), transport_(transport), resolver_(std::move(resolver)) {
  if (transport_ == ImageTransport::base64 && !resolver_) {
    resolver_ = std::make_shared<HttpImageResolver>(endpoint_.timeout_s);
  }
}

BackendResponse HttpChatBackend::complete(const ChatRequest& request) {
  const Json body = chat_request_body(request, transport_, resolver_.get());
  double latency = 0.0;
  const Json reply = post_json(endpoint_, endpoint_.path, body, latency);
  BackendResponse r = parse_chat_response(reply);
  r.latency_ms = latency;
  return r;
}

HttpSearchBackend::HttpSearchBackend(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}

Json HttpSearchBackend::post(const std::string& route, const Json& body, double& latency_ms) {
  return post_json(endpoint_, join_path(endpoint_.path, route), body, latency_ms);
}

SearchResponse<WebHit> HttpSearchBackend::web_search(const std::string& query, int k) {
  double latency = 0.0;
  const Json body = post("web_search", {{"query", query}, {"k", k}}, latency);
  return read_hits<WebHit>(body, latency, [](const Json& h) {
    WebHit hit;
    hit.title = h.value("title", "");
    hit.description = h.value("snippet", h.value("description", ""));
    for (const char* key : {"related", "related_knowledge"}) {
      if (h.contains(key) && h[key].is_string()) {
        hit.related_knowledge = h[key].get<std::string>();
        break;
      }
    }
    hit.url = h.value("url", "");
    return hit;
  });
}

SearchResponse<ImageHit> HttpSearchBackend::image_search_by_image(const ImageRef& image, int k) {
  Json req{{"image_url", image.locator}, {"k", k}};
  if (image.content_hash) req["image_hash"] = *image.content_hash;
  double latency = 0.0;
  const Json body = post("image_search_by_image", req, latency);
  return read_hits<ImageHit>(body, latency, image_hit_from);
}

SearchResponse<ImageHit> HttpSearchBackend::image_search_by_text(const std::string& query, int k) {
  double latency = 0.0;
  const Json body = post("image_search_by_text", {{"query", query}, {"k", k}}, latency);
  return read_hits<ImageHit>(body, latency, image_hit_from);
}

std::string HttpImageResolver::fetch(const std::string& locator) {
  if (locator.rfind("http://", 0) != 0 && locator.rfind("https://", 0) != 0) {
    return files_.fetch(locator);
  }
  const auto scheme_end = locator.find("://") + 3;
  const auto path_start = locator.find('/', scheme_end);
  const std::string host = locator.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/" : locator.substr(path_start);
  httplib::Client client(host);
  set_timeouts(client, timeout_s_);
  client.set_follow_location(true);
  auto res = client.Get(path);
  if (!res || res->status != 200) {
    throw Error("cannot fetch image " + locator +
                (res ? ": HTTP " + std::to_string(res->status) : ": " + httplib::to_string(res.error())));
  }
  return res->body;
}

}  // namespace mrag
