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

#include <memory>
#include <optional>
#include <string>

#include "mrag/gateway.hpp"
#include "mrag/toolbox.hpp"

namespace mrag {

/// One HTTP(S) service. Credentials come only from the environment: when
/// `api_key_env` names a set variable its value is sent as a bearer token.
struct HttpEndpoint {
  std::string base_url;  // scheme://host[:port]
  std::string path = "/";
  std::optional<std::string> api_key_env;
  double timeout_s = 60.0;

  Json to_json() const;
  static HttpEndpoint from_json(const Json& j);
};

enum class ImageTransport { url, base64 };

std::string_view to_string(ImageTransport t);
ImageTransport image_transport_from_string(std::string_view s);

/// 429 and 5xx are transient, other non-2xx statuses permanent.
BackendError::Kind classify_http_status(int status);

/// Wire body for a chat request:
/// {model, messages:[{role, content:[{type:"text",text}|{type:"image_url",image_url}]}],
///  temperature, max_tokens}. With base64 transport images are inlined as
/// data URLs fetched through `resolver`.
Json chat_request_body(const ChatRequest& request, ImageTransport transport,
                       ImageResolver* resolver);

/// Reads {text, usage{input_tokens, output_tokens}}; usage is optional.
BackendResponse parse_chat_response(const Json& body);

class HttpChatBackend : public ChatBackend {
 public:
  HttpChatBackend(HttpEndpoint endpoint, ImageTransport transport = ImageTransport::url,
                  std::shared_ptr<ImageResolver> resolver = nullptr);
  BackendResponse complete(const ChatRequest& request) override;

 private:
  HttpEndpoint endpoint_;
  ImageTransport transport_;
  std::shared_ptr<ImageResolver> resolver_;
};

/// Search service speaking a small JSON protocol, one POST route per tool
/// under the endpoint path:
///   web_search            {query, k}                  -> {hits:[{title, snippet, related?, url}]}
///   image_search_by_image {image_url, image_hash?, k} -> {hits:[{image_url, image_hash?, caption, source}]}
///   image_search_by_text  {query, k}                  -> same as above
/// An optional top-level "retrieved_at" is passed through.
class HttpSearchBackend : public SearchBackend {
 public:
  explicit HttpSearchBackend(HttpEndpoint endpoint);
  SearchResponse<WebHit> web_search(const std::string& query, int k) override;
  SearchResponse<ImageHit> image_search_by_image(const ImageRef& image, int k) override;
  SearchResponse<ImageHit> image_search_by_text(const std::string& query, int k) override;

 private:
  Json post(const std::string& route, const Json& body, double& latency_ms);
  HttpEndpoint endpoint_;
};

/// Fetches http(s) locators over the network and everything else from disk.
class HttpImageResolver : public ImageResolver {
 public:
  explicit HttpImageResolver(double timeout_s = 30.0) : timeout_s_(timeout_s) {}
  std::string fetch(const std::string& locator) override;

 private:
  double timeout_s_;
  FileImageResolver files_;
};

}  // namespace mrag
