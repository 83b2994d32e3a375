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

#include "mrag/gateway.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <thread>

#include "mrag/segment.hpp"

namespace mrag {

std::string_view to_string(Role r) {
  switch (r) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "user";
}

Role role_from_string(std::string_view s) {
  if (s == "system") return Role::system;
  if (s == "user") return Role::user;
  if (s == "assistant") return Role::assistant;
  throw Error("unknown chat role '" + std::string(s) + "'");
}

ChatMessage ChatMessage::text(Role role, std::string text) {
  ChatMessage m;
  m.role = role;
  m.parts.emplace_back(TextPart{std::move(text)});
  return m;
}

std::string ChatMessage::joined_text() const {
  std::string out;
  for (const auto& p : parts) {
    if (const auto* t = std::get_if<TextPart>(&p)) {
      if (!out.empty()) out.push_back('\n');
      out += t->text;
    }
  }
  return out;
}

std::size_t ChatMessage::image_count() const {
  return static_cast<std::size_t>(std::count_if(parts.begin(), parts.end(), [](const auto& p) {
    return std::holds_alternative<ImageRef>(p);
  }));
}

std::int64_t estimate_tokens(std::string_view text) {
  return static_cast<std::int64_t>(segment(text).size());
}

Json canonical_request(const ChatRequest& request) {
  Json messages = Json::array();
  for (const auto& m : request.conversation) {
    Json parts = Json::array();
    for (const auto& p : m.parts) {
      if (const auto* t = std::get_if<TextPart>(&p)) {
        parts.push_back({{"type", "text"}, {"text", t->text}});
      } else {
        const auto& img = std::get<ImageRef>(p);
        parts.push_back({{"type", "image"}, {"image", img.content_hash.value_or(img.locator)}});
      }
    }
    messages.push_back({{"role", std::string(to_string(m.role))}, {"parts", std::move(parts)}});
  }
  return Json{{"model", request.model_id},
              {"messages", std::move(messages)},
              {"temperature", request.params.temperature},
              {"max_tokens", request.params.max_tokens}};
}

std::string cache_key(const ChatRequest& request) { return sha256_hex(to_line(canonical_request(request))); }

Gateway::Gateway(std::shared_ptr<ChatBackend> backend, GatewayConfig config)
    : backend_(std::move(backend)),
      config_(std::move(config)),
      sleeper_([](double ms) {
        std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(ms));
      }),
      rng_(config_.retry.seed) {
  if (!backend_) throw Error("gateway requires a backend");
  if (config_.retry.budget < 0) throw Error("retry budget must be non-negative");
}

double Gateway::backoff_delay_ms(int retry) {
  const auto& p = config_.retry;
  const double base = std::min(p.max_delay_ms, p.base_delay_ms * std::pow(2.0, retry - 1));
  double u = 0.0;
  {
    std::lock_guard lock(rng_mutex_);
    u = std::uniform_real_distribution<double>(-1.0, 1.0)(rng_);
  }
  return std::max(0.0, base * (1.0 + p.jitter * u));
}

ModelReply Gateway::call_backend(const ChatRequest& request) {
  const int budget = config_.retry.budget;
  std::string last_error;
  for (int attempt = 0; attempt <= budget; ++attempt) {
    ++backend_calls_;
    try {
      BackendResponse resp = backend_->complete(request);
      ModelReply reply;
      reply.text = std::move(resp.text);
      reply.model_id = request.model_id;
      reply.latency_ms = std::max(0.0, resp.latency_ms);
      reply.attempts = attempt + 1;
      if (resp.usage) {
        reply.usage = *resp.usage;
        reply.usage.input_tokens = std::max<std::int64_t>(0, reply.usage.input_tokens);
        reply.usage.output_tokens = std::max<std::int64_t>(0, reply.usage.output_tokens);
      } else {
        reply.usage_estimated = true;
        for (const auto& m : request.conversation) {
          reply.usage.input_tokens += estimate_tokens(m.joined_text()) +
                                      static_cast<std::int64_t>(m.image_count()) *
                                          config_.image_token_cost;
        }
        reply.usage.output_tokens = estimate_tokens(reply.text);
      }
      return reply;
    } catch (const BackendError& e) {
      if (!e.retryable()) throw;
      last_error = e.what();
      if (attempt == budget) break;
      sleeper_(backoff_delay_ms(attempt + 1));
    }
  }
  throw BackendError(BackendError::Kind::permanent,
                     "model '" + request.model_id + "' failed after " +
                         std::to_string(budget + 1) + " attempt(s): " + last_error);
}

namespace {

Json reply_json(const ModelReply& r) {
  return Json{{"text", r.text},
              {"model_id", r.model_id},
              {"input_tokens", r.usage.input_tokens},
              {"output_tokens", r.usage.output_tokens},
              {"latency_ms", r.latency_ms},
              {"usage_estimated", r.usage_estimated}};
}

ModelReply cached_copy(ModelReply r) {
  r.from_cache = true;
  r.latency_ms = 0.0;
  r.attempts = 0;
  return r;
}

}  // namespace

std::optional<ModelReply> Gateway::load_disk_cache(const std::string& key) const {
  if (!config_.cache_dir) return std::nullopt;
  const auto path = *config_.cache_dir / (key + ".json");
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return std::nullopt;
  try {
    const Json j = Json::parse(read_file(path));
    ModelReply r;
    r.text = j.at("text").get<std::string>();
    r.model_id = j.at("model_id").get<std::string>();
    r.usage.input_tokens = j.at("input_tokens").get<std::int64_t>();
    r.usage.output_tokens = j.at("output_tokens").get<std::int64_t>();
    r.latency_ms = j.at("latency_ms").get<double>();
    r.usage_estimated = j.value("usage_estimated", false);
    return r;
  } catch (const std::exception&) {
    return std::nullopt;  // corrupt entry: treat as a miss
  }
}

void Gateway::store_disk_cache(const std::string& key, const ModelReply& reply) const {
  if (!config_.cache_dir) return;
  write_file_atomic(*config_.cache_dir / (key + ".json"), reply_json(reply).dump(2));
}

ModelReply Gateway::chat(const std::string& model_id, const std::vector<ChatMessage>& conversation,
                         const DecodingParams& params) {
  if (conversation.empty()) throw Error("chat: conversation is empty");
  for (const auto& m : conversation) {
    if (m.parts.empty()) throw Error("chat: message without parts");
  }
  ChatRequest request{model_id, conversation, params};
  if (!config_.cache_enabled) return call_backend(request);

  const std::string key = cache_key(request);
  std::promise<ModelReply> promise;
  std::shared_future<ModelReply> pending;
  {
    std::lock_guard lock(cache_mutex_);
    auto it = cache_.find(key);
    if (it != cache_.end()) {
      pending = it->second;
    } else if (auto disk = load_disk_cache(key)) {
      std::promise<ModelReply> ready;
      ready.set_value(*disk);
      cache_.emplace(key, ready.get_future().share());
      return cached_copy(*disk);
    } else {
      cache_.emplace(key, promise.get_future().share());
    }
  }
  if (pending.valid()) return cached_copy(pending.get());

  try {
    ModelReply reply = call_backend(request);
    promise.set_value(reply);
    store_disk_cache(key, reply);
    return reply;
  } catch (...) {
    {
      std::lock_guard lock(cache_mutex_);
      cache_.erase(key);
    }
    promise.set_exception(std::current_exception());
    throw;
  }
}

void ModelRouter::add(const std::string& model_id, std::shared_ptr<ChatBackend> backend) {
  routes_[model_id] = std::move(backend);
}

BackendResponse ModelRouter::complete(const ChatRequest& request) {
  auto it = routes_.find(request.model_id);
  if (it == routes_.end()) {
    throw BackendError(BackendError::Kind::permanent, "no backend bound to model '" +
                                                          request.model_id + "'");
  }
  return it->second->complete(request);
}

BackendResponse EchoBackend::complete(const ChatRequest& request) {
  ++calls_;
  for (auto it = request.conversation.rbegin(); it != request.conversation.rend(); ++it) {
    if (it->role == Role::user) return BackendResponse{it->joined_text(), std::nullopt, 0.0};
  }
  return BackendResponse{"", std::nullopt, 0.0};
}

BackendResponse ScriptedBackend::complete(const ChatRequest& request) {
  std::lock_guard lock(mutex_);
  requests_.push_back(request);
  if (replies_.empty()) return BackendResponse{"", std::nullopt, 0.0};
  const std::string& text = replies_[std::min(next_, replies_.size() - 1)];
  ++next_;
  return BackendResponse{text, std::nullopt, 0.0};
}

std::size_t ScriptedBackend::calls() const {
  std::lock_guard lock(mutex_);
  return requests_.size();
}

std::vector<ChatRequest> ScriptedBackend::requests() const {
  std::lock_guard lock(mutex_);
  return requests_;
}

BackendResponse FaultInjectingBackend::complete(const ChatRequest& request) {
  std::optional<BackendError::Kind> fault;
  {
    std::lock_guard lock(mutex_);
    if (attempts_ < schedule_.size()) fault = schedule_[attempts_];
    ++attempts_;
  }
  if (fault) {
    throw BackendError(*fault, "injected fault");
  }
  return inner_->complete(request);
}

std::size_t FaultInjectingBackend::attempts() const {
  std::lock_guard lock(mutex_);
  return attempts_;
}

BackendResponse RecordingBackend::complete(const ChatRequest& request) {
  {
    std::lock_guard lock(mutex_);
    requests_.push_back(request);
  }
  return inner_->complete(request);
}

std::vector<ChatRequest> RecordingBackend::requests() const {
  std::lock_guard lock(mutex_);
  return requests_;
}

}  // namespace mrag
