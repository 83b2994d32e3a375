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
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "mrag/common.hpp"
#include "mrag/dataset.hpp"

namespace mrag {

enum class Role { system, user, assistant };

std::string_view to_string(Role r);
Role role_from_string(std::string_view s);

struct TextPart {
  std::string text;
  bool operator==(const TextPart&) const = default;
};

using ContentPart = std::variant<TextPart, ImageRef>;

struct ChatMessage {
  Role role = Role::user;
  std::vector<ContentPart> parts;

  static ChatMessage text(Role role, std::string text);
  static ChatMessage user_text(std::string body) { return text(Role::user, std::move(body)); }

  /// Concatenation of the text parts.
  std::string joined_text() const;
  std::size_t image_count() const;
  bool operator==(const ChatMessage&) const = default;
};

struct TokenUsage {
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;

  TokenUsage& operator+=(const TokenUsage& o) {
    input_tokens += o.input_tokens;
    output_tokens += o.output_tokens;
    return *this;
  }
  friend TokenUsage operator+(TokenUsage a, const TokenUsage& b) { return a += b; }
  bool operator==(const TokenUsage&) const = default;
};

struct DecodingParams {
  double temperature = 0.0;
  int max_tokens = 512;
  bool operator==(const DecodingParams&) const = default;
};

struct ChatRequest {
  std::string model_id;
  std::vector<ChatMessage> conversation;
  DecodingParams params;
};

/// What a backend returns for one attempt. `usage` is empty when the
/// backend does not report token counts.
struct BackendResponse {
  std::string text;
  std::optional<TokenUsage> usage;
  double latency_ms = 0.0;
};

class BackendError : public Error {
 public:
  enum class Kind { transient, permanent, timeout };
  BackendError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }
  bool retryable() const { return kind_ != Kind::permanent; }

 private:
  Kind kind_;
};

/// A chat-capable model endpoint. Implementations must be thread-safe.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual BackendResponse complete(const ChatRequest& request) = 0;
};

struct ModelReply {
  std::string text;
  TokenUsage usage;
  std::string model_id;
  double latency_ms = 0.0;
  bool from_cache = false;
  int attempts = 0;
  bool usage_estimated = false;
};

struct RetryPolicy {
  int budget = 3;  // retries after the first attempt
  double base_delay_ms = 250.0;
  double max_delay_ms = 8000.0;
  double jitter = 0.25;  // relative, uniform in [-jitter, +jitter]
  std::uint64_t seed = 0x5eed;
};

struct GatewayConfig {
  RetryPolicy retry;
  bool cache_enabled = true;
  std::optional<std::filesystem::path> cache_dir;
  /// Estimated input tokens charged per image part when the backend does not
  /// report usage.
  int image_token_cost = 0;
};

/// Token count under the reference segmentation (auto language).
std::int64_t estimate_tokens(std::string_view text);

/// Canonical serialization of (model_id, conversation, params). Image parts
/// contribute their content hash, or their locator when unresolved.
Json canonical_request(const ChatRequest& request);
std::string cache_key(const ChatRequest& request);

using Sleeper = std::function<void(double ms)>;

/// Uniform port to chat models with retries, response caching and token
/// usage capture. Thread-safe: share one gateway across sessions.
class Gateway {
 public:
  Gateway(std::shared_ptr<ChatBackend> backend, GatewayConfig config = {});

  /// Throws BackendError(permanent) once the retry budget is spent, or
  /// immediately for non-retryable errors.
  ModelReply chat(const std::string& model_id, const std::vector<ChatMessage>& conversation,
                  const DecodingParams& params = {});

  /// Number of backend invocations (including failed attempts).
  std::size_t backend_calls() const { return backend_calls_.load(); }
  const GatewayConfig& config() const { return config_; }

  /// Replaces the backoff sleep, e.g. with a no-op in tests.
  void set_sleeper(Sleeper sleeper) { sleeper_ = std::move(sleeper); }

  /// Backoff delay before retry number `retry` (1-based), jitter applied.
  double backoff_delay_ms(int retry);

 private:
  ModelReply call_backend(const ChatRequest& request);
  std::optional<ModelReply> load_disk_cache(const std::string& key) const;
  void store_disk_cache(const std::string& key, const ModelReply& reply) const;

  std::shared_ptr<ChatBackend> backend_;
  GatewayConfig config_;
  Sleeper sleeper_;
  std::atomic<std::size_t> backend_calls_{0};

  std::mutex rng_mutex_;
  std::mt19937_64 rng_;

  std::mutex cache_mutex_;
  std::unordered_map<std::string, std::shared_future<ModelReply>> cache_;
};

/// Dispatches requests to per-model backends.
class ModelRouter : public ChatBackend {
 public:
  void add(const std::string& model_id, std::shared_ptr<ChatBackend> backend);
  BackendResponse complete(const ChatRequest& request) override;
  bool has(const std::string& model_id) const { return routes_.count(model_id) > 0; }

 private:
  std::map<std::string, std::shared_ptr<ChatBackend>> routes_;
};

// ---- Mock backends --------------------------------------------------------

/// Replies with the text of the last user message.
class EchoBackend : public ChatBackend {
 public:
  BackendResponse complete(const ChatRequest& request) override;
  std::size_t calls() const { return calls_.load(); }

 private:
  std::atomic<std::size_t> calls_{0};
};

/// Replies from a fixed queue, then repeats the last entry.
class ScriptedBackend : public ChatBackend {
 public:
  explicit ScriptedBackend(std::vector<std::string> replies) : replies_(std::move(replies)) {}
  BackendResponse complete(const ChatRequest& request) override;
  std::size_t calls() const;
  std::vector<ChatRequest> requests() const;

 private:
  mutable std::mutex mutex_;
  std::vector<std::string> replies_;
  std::size_t next_ = 0;
  std::vector<ChatRequest> requests_;
};

/// Fails according to a schedule before delegating to an inner backend.
/// Each entry describes one attempt: nullopt delegates, a kind throws.
class FaultInjectingBackend : public ChatBackend {
 public:
  FaultInjectingBackend(std::shared_ptr<ChatBackend> inner,
                        std::vector<std::optional<BackendError::Kind>> schedule)
      : inner_(std::move(inner)), schedule_(std::move(schedule)) {}
  BackendResponse complete(const ChatRequest& request) override;
  std::size_t attempts() const;

 private:
  std::shared_ptr<ChatBackend> inner_;
  mutable std::mutex mutex_;
  std::vector<std::optional<BackendError::Kind>> schedule_;
  std::size_t attempts_ = 0;
};

/// Records every request (by model) before delegating.
class RecordingBackend : public ChatBackend {
 public:
  explicit RecordingBackend(std::shared_ptr<ChatBackend> inner) : inner_(std::move(inner)) {}
  BackendResponse complete(const ChatRequest& request) override;
  std::vector<ChatRequest> requests() const;

 private:
  std::shared_ptr<ChatBackend> inner_;
  mutable std::mutex mutex_;
  std::vector<ChatRequest> requests_;
};

}  // namespace mrag
