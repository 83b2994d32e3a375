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

#include <thread>

#include "doctest.h"
#include "mrag/gateway.hpp"
#include "mrag/segment.hpp"
#include "test_support.hpp"

using namespace mrag;
using Kind = BackendError::Kind;

namespace {

std::vector<ChatMessage> ping() { return {ChatMessage::user_text("ping")}; }

std::unique_ptr<Gateway> quiet(std::shared_ptr<ChatBackend> backend, GatewayConfig config = {}) {
  auto g = std::make_unique<Gateway>(std::move(backend), config);
  g->set_sleeper([](double) {});
  return g;
}

// Counts calls and sleeps for a while so concurrent callers overlap.
class SlowEcho : public ChatBackend {
 public:
  BackendResponse complete(const ChatRequest& r) override {
    ++calls;
    std::this_thread::sleep_for(std::chrono::milliseconds(30));
    return {r.conversation.back().joined_text(), TokenUsage{3, 1}, 5.0};
  }
  std::atomic<int> calls{0};
};

}  // namespace

TEST_SUITE("gateway") {
  TEST_CASE("echo backend answers ping") {
    auto echo = std::make_shared<EchoBackend>();
    GatewayConfig cfg;
    cfg.cache_enabled = false;
    Gateway g(echo, cfg);
    const ModelReply r = g.chat("m", ping());
    CHECK(r.text == "ping");
    CHECK_FALSE(r.from_cache);
    CHECK(r.model_id == "m");
    CHECK(r.attempts == 1);
    CHECK(r.usage_estimated);
    CHECK(r.usage == TokenUsage{1, 1});
  }

  TEST_CASE("repeated call is served from cache") {
    auto echo = std::make_shared<EchoBackend>();
    Gateway g(echo);
    const ModelReply a = g.chat("m", ping());
    const ModelReply b = g.chat("m", ping());
    CHECK(b.text == a.text);
    CHECK(b.from_cache);
    CHECK(b.usage == a.usage);
    CHECK(echo->calls() == 1);
    g.chat("m", ping(), DecodingParams{0.7, 512});
    g.chat("other", ping());
    CHECK(echo->calls() == 3);
  }

  TEST_CASE("two failures then success within budget") {
    auto inner = std::make_shared<EchoBackend>();
    auto faulty = std::make_shared<FaultInjectingBackend>(
        inner, std::vector<std::optional<Kind>>{Kind::transient, Kind::timeout});
    auto owned = quiet(faulty);
    Gateway& g = *owned;
    const ModelReply r = g.chat("m", ping());
    CHECK(r.text == "ping");
    CHECK(r.attempts == 3);
    CHECK(faulty->attempts() == 3);
    CHECK(g.backend_calls() == 3);
  }

  TEST_CASE("budget exhaustion becomes permanent") {
    auto inner = std::make_shared<EchoBackend>();
    auto faulty = std::make_shared<FaultInjectingBackend>(
        inner, std::vector<std::optional<Kind>>(10, Kind::transient));
    GatewayConfig cfg;
    cfg.retry.budget = 2;
    auto owned = quiet(faulty, cfg);
    Gateway& g = *owned;
    try {
      g.chat("m", ping());
      FAIL("expected failure");
    } catch (const BackendError& e) {
      CHECK(e.kind() == Kind::permanent);
    }
    CHECK(faulty->attempts() == 3);
    // A failed call leaves no cache entry behind.
    CHECK_THROWS_AS(g.chat("m", ping()), BackendError);
    CHECK(faulty->attempts() == 6);
  }

  TEST_CASE("permanent errors are not retried") {
    auto faulty = std::make_shared<FaultInjectingBackend>(
        std::make_shared<EchoBackend>(), std::vector<std::optional<Kind>>{Kind::permanent});
    auto owned = quiet(faulty);
    Gateway& g = *owned;
    CHECK_THROWS_AS(g.chat("m", ping()), BackendError);
    CHECK(faulty->attempts() == 1);
  }

  TEST_CASE("requests are validated") {
    Gateway g(std::make_shared<EchoBackend>());
    CHECK_THROWS_AS(g.chat("m", {}), Error);
    CHECK_THROWS_AS(g.chat("m", {ChatMessage{Role::user, {}}}), Error);
  }

  TEST_CASE("token estimates follow the segmenter") {
    CHECK(estimate_tokens("") == 0);
    CHECK(estimate_tokens("a b c") == 3);
    const std::string mixed = "OmniSearch 在 2024 年发布了 new results!";
    CHECK(estimate_tokens(mixed) == static_cast<std::int64_t>(segment(mixed).size()));
    const std::vector<std::string> parts = {"hello world", "你好世界", "x", "", "a-b c.d"};
    for (const auto& a : parts) {
      for (const auto& b : parts) {
        const auto joined = estimate_tokens(a + b);
        CHECK(joined >= estimate_tokens(a));
        CHECK(joined >= estimate_tokens(b));
      }
    }
  }

  TEST_CASE("cache key covers model, conversation, params and image hash") {
    ChatRequest r{"m", ping(), {}};
    const std::string k = cache_key(r);
    CHECK(k.size() == 64);
    ChatRequest other = r;
    other.params.max_tokens = 10;
    CHECK(cache_key(other) != k);
    ChatMessage img;
    img.parts.emplace_back(ImageRef{"a.jpg", std::string(64, '1')});
    ChatMessage img2;
    img2.parts.emplace_back(ImageRef{"b.jpg", std::string(64, '1')});
    CHECK(cache_key({"m", {img}, {}}) == cache_key({"m", {img2}, {}}));
    img2.parts[0] = ImageRef{"b.jpg", std::string(64, '2')};
    CHECK(cache_key({"m", {img}, {}}) != cache_key({"m", {img2}, {}}));
  }

  TEST_CASE("concurrent identical requests reach the backend once") {
    auto slow = std::make_shared<SlowEcho>();
    Gateway g(slow);
    std::vector<std::thread> threads;
    std::vector<ModelReply> replies(8);
    for (int i = 0; i < 8; ++i) {
      threads.emplace_back([&, i] { replies[i] = g.chat("m", ping()); });
    }
    for (auto& t : threads) t.join();
    CHECK(slow->calls == 1);
    int fresh = 0;
    for (const auto& r : replies) {
      CHECK(r.text == "ping");
      CHECK(r.usage == TokenUsage{3, 1});
      fresh += r.from_cache ? 0 : 1;
    }
    CHECK(fresh == 1);
  }

  TEST_CASE("disk cache survives a new gateway") {
    mrag::testing::TempDir dir;
    GatewayConfig cfg;
    cfg.cache_dir = dir.path();
    auto echo = std::make_shared<EchoBackend>();
    {
      Gateway g(echo, cfg);
      g.chat("m", ping());
    }
    Gateway g2(echo, cfg);
    const ModelReply r = g2.chat("m", ping());
    CHECK(r.from_cache);
    CHECK(r.text == "ping");
    CHECK(echo->calls() == 1);
  }

  TEST_CASE("backoff grows and respects jitter bounds") {
    GatewayConfig cfg;
    cfg.retry.base_delay_ms = 100;
    cfg.retry.max_delay_ms = 1000;
    cfg.retry.jitter = 0.25;
    Gateway g(std::make_shared<EchoBackend>(), cfg);
    for (int retry = 1; retry <= 6; ++retry) {
      const double nominal = std::min(1000.0, 100.0 * std::pow(2.0, retry - 1));
      for (int i = 0; i < 20; ++i) {
        const double d = g.backoff_delay_ms(retry);
        CHECK(d >= nominal * 0.75 - 1e-9);
        CHECK(d <= nominal * 1.25 + 1e-9);
      }
    }
  }

  TEST_CASE("backoff sleeps between attempts") {
    auto faulty = std::make_shared<FaultInjectingBackend>(
        std::make_shared<EchoBackend>(), std::vector<std::optional<Kind>>{Kind::transient, Kind::transient});
    GatewayConfig cfg;
    cfg.retry.jitter = 0.0;
    Gateway g(faulty, cfg);
    std::vector<double> sleeps;
    g.set_sleeper([&](double ms) { sleeps.push_back(ms); });
    g.chat("m", ping());
    CHECK(sleeps == std::vector<double>{250.0, 500.0});
  }

  TEST_CASE("image token cost applies to estimated usage") {
    GatewayConfig cfg;
    cfg.image_token_cost = 85;
    cfg.cache_enabled = false;
    Gateway g(std::make_shared<EchoBackend>(), cfg);
    ChatMessage m = ChatMessage::user_text("a b");
    m.parts.emplace_back(ImageRef{"x.jpg", std::nullopt});
    CHECK(g.chat("m", {m}).usage.input_tokens == 2 + 85);
  }

  TEST_CASE("router binds models to backends") {
    auto router = std::make_shared<ModelRouter>();
    router->add("a", std::make_shared<ScriptedBackend>(std::vector<std::string>{"from a"}));
    Gateway g(router);
    CHECK(g.chat("a", ping()).text == "from a");
    try {
      g.chat("b", ping());
      FAIL("unbound model accepted");
    } catch (const BackendError& e) {
      CHECK(e.kind() == Kind::permanent);
    }
  }

  TEST_CASE("scripted backend repeats its last reply") {
    auto s = std::make_shared<ScriptedBackend>(std::vector<std::string>{"one", "two"});
    GatewayConfig cfg;
    cfg.cache_enabled = false;
    Gateway g(s, cfg);
    CHECK(g.chat("m", ping()).text == "one");
    CHECK(g.chat("m", ping()).text == "two");
    CHECK(g.chat("m", ping()).text == "two");
    CHECK(s->calls() == 3);
  }
}
