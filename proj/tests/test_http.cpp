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


#include <cstdlib>
#include <mutex>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "mrag/http_backends.hpp"
#include "test_support.hpp"

using namespace mrag;

namespace {

// Local server on an ephemeral port; handlers are set before start().
class LocalServer {
 public:
  httplib::Server server;

  void start() {
    port_ = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port_ > 0);
    thread_ = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~LocalServer() {
    server.stop();
    if (thread_.joinable()) thread_.join();
  }
  HttpEndpoint endpoint(const std::string& path = "/") const {
    HttpEndpoint e;
    e.base_url = "http://127.0.0.1:" + std::to_string(port_);
    e.path = path;
    e.timeout_s = 5.0;
    return e;
  }

 private:
  int port_ = 0;
  std::thread thread_;
};

std::vector<ChatMessage> question_with_image(const std::string& locator) {
  ChatMessage m;
  m.role = Role::user;
  m.parts.emplace_back(ImageRef{locator, std::nullopt});
  m.parts.emplace_back(TextPart{"What is this?"});
  return {ChatMessage::text(Role::system, "Be brief."), m};
}

BackendError::Kind error_kind(const std::function<void()>& f) {
  try {
    f();
  } catch (const BackendError& e) {
    return e.kind();
  }
  FAIL("expected a BackendError");
  return BackendError::Kind::permanent;
}

}  // namespace

TEST_SUITE("http") {
  TEST_CASE("status classification") {
    CHECK(classify_http_status(429) == BackendError::Kind::transient);
    CHECK(classify_http_status(503) == BackendError::Kind::transient);
    CHECK(classify_http_status(400) == BackendError::Kind::permanent);
    CHECK(classify_http_status(404) == BackendError::Kind::permanent);
  }

  TEST_CASE("chat wire format") {
    const ChatRequest req{"gpt-4v", question_with_image("https://x/img.png"), {0.0, 64}};
    const Json body = chat_request_body(req, ImageTransport::url, nullptr);
    CHECK(body.at("model") == "gpt-4v");
    CHECK(body.at("max_tokens") == 64);
    CHECK(body.at("messages").size() == 2);
    const Json& content = body.at("messages")[1].at("content");
    CHECK(content[0].at("type") == "image_url");
    CHECK(content[0].at("image_url") == "https://x/img.png");
    CHECK(content[1].at("text") == "What is this?");

    testing::TempDir dir;
    write_file_atomic(dir / "i.png", "\x89PNG....");
    FileImageResolver files;
    const ChatRequest local{"m", question_with_image((dir / "i.png").string()), {}};
    const Json inlined = chat_request_body(local, ImageTransport::base64, &files);
    const std::string url = inlined.at("messages")[1].at("content")[0].at("image_url");
    CHECK(url.rfind("data:image/png;base64,", 0) == 0);

    const auto resp = parse_chat_response(Json{{"text", "hi"}, {"usage", {{"input_tokens", 12}, {"output_tokens", 3}}}});
    CHECK(resp.text == "hi");
    REQUIRE(resp.usage);
    CHECK(resp.usage->input_tokens == 12);
    CHECK_FALSE(parse_chat_response(Json{{"text", "hi"}}).usage);
    CHECK_THROWS_AS(parse_chat_response(Json{{"answer", "hi"}}), BackendError);
  }

  TEST_CASE("chat backend over a local server") {
    LocalServer srv;
    std::mutex mu;
    std::string seen_auth;
    int failures_left = 1;
    srv.server.Post("/v1/chat", [&](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard lock(mu);
      seen_auth = req.get_header_value("Authorization");
      if (failures_left-- > 0) {
        res.status = 503;
        return;
      }
      const Json body = Json::parse(req.body);
      res.set_content(Json{{"text", "Answer: " + body.at("model").get<std::string>()},
                           {"usage", {{"input_tokens", 7}, {"output_tokens", 2}}}}
                          .dump(),
                      "application/json");
    });
    srv.server.Post("/bad", [](const httplib::Request&, httplib::Response& res) { res.status = 400; });
    srv.server.Post("/garbled", [](const httplib::Request&, httplib::Response& res) {
      res.set_content("not json", "text/plain");
    });
    srv.start();

    ::setenv("MRAG_TEST_KEY", "sekrit", 1);
    HttpEndpoint ep = srv.endpoint("/v1/chat");
    ep.api_key_env = "MRAG_TEST_KEY";
    Gateway gw(std::make_shared<HttpChatBackend>(ep), testing::uncached());
    gw.set_sleeper([](double) {});
    const ModelReply r = gw.chat("gpt-4v", question_with_image("https://x/img.png"));
    CHECK(r.text == "Answer: gpt-4v");
    CHECK(r.attempts == 2);
    CHECK(r.usage.input_tokens == 7);
    CHECK_FALSE(r.usage_estimated);
    CHECK(seen_auth == "Bearer sekrit");

    HttpChatBackend bad(srv.endpoint("/bad"));
    CHECK(error_kind([&] { bad.complete({"m", question_with_image("u"), {}}); }) ==
          BackendError::Kind::permanent);
    HttpChatBackend garbled(srv.endpoint("/garbled"));
    CHECK(error_kind([&] { garbled.complete({"m", question_with_image("u"), {}}); }) ==
          BackendError::Kind::permanent);
  }

  TEST_CASE("unreachable endpoints are retryable") {
    HttpEndpoint ep;
    ep.base_url = "http://127.0.0.1:1";
    ep.timeout_s = 1.0;
    HttpChatBackend chat(ep);
    const auto kind = error_kind([&] { chat.complete({"m", question_with_image("u"), {}}); });
    CHECK(kind != BackendError::Kind::permanent);
  }

  TEST_CASE("search backend over a local server") {
    LocalServer srv;
    srv.server.Post("/search/web_search", [](const httplib::Request& req, httplib::Response& res) {
      const Json body = Json::parse(req.body);
      Json hits = Json::array();
      for (int i = 0; i < body.at("k").get<int>() + 1; ++i) {
        hits.push_back({{"title", "t" + std::to_string(i)},
                        {"snippet", body.at("query").get<std::string>()},
                        {"url", "https://e/" + std::to_string(i)}});
      }
      hits.push_back({{"title", ""}, {"snippet", ""}, {"url", "https://e/empty"}});
      res.set_content(Json{{"hits", hits}, {"retrieved_at", "2024-06-01"}}.dump(), "application/json");
    });
    auto images = [](const httplib::Request&, httplib::Response& res) {
      const Json hits = Json::array({{{"image_url", "https://i/1.jpg"}, {"image_hash", "h1"},
                                      {"caption", "Photo of Zenda."}, {"source", "https://s/1"}},
                                     {{"image_url", "https://i/2.jpg"}, {"image_hash", "h1"},
                                      {"caption", "dup"}, {"source", "https://s/2"}}});
      res.set_content(Json{{"hits", hits}}.dump(), "application/json");
    };
    srv.server.Post("/search/image_search_by_image", images);
    srv.server.Post("/search/image_search_by_text", images);
    srv.start();

    auto backend = std::make_shared<HttpSearchBackend>(srv.endpoint("/search"));
    Toolbox tb(backend, std::make_shared<FileImageResolver>());
    const auto web = tb.web_search("river of Zenda", 3);
    REQUIRE(web.hits.size() == 3);
    CHECK(std::get<WebHit>(web.hits[0]).description == "river of Zenda");
    CHECK(std::get<WebHit>(web.hits[2]).rank == 3);
    CHECK(web.retrieved_at == "2024-06-01");

    const auto img = tb.image_search_by_image(ImageRef{"https://q.jpg", std::string("qh")}, 3);
    REQUIRE(img.hits.size() == 1);  // duplicates by hash collapse
    CHECK(std::get<ImageHit>(img.hits[0]).caption == "Photo of Zenda.");
    CHECK(std::get<ImageHit>(img.hits[0]).source_url == "https://s/1");
    CHECK_FALSE(tb.image_search_by_text("Zenda", 2).retrieved_at.empty());
  }

  TEST_CASE("endpoint json round trip") {
    HttpEndpoint e;
    e.base_url = "https://api.example.com";
    e.path = "/v1";
    e.api_key_env = "KEY";
    e.timeout_s = 12.5;
    const auto back = HttpEndpoint::from_json(e.to_json());
    CHECK(back.base_url == e.base_url);
    CHECK(back.api_key_env == e.api_key_env);
    CHECK(back.timeout_s == 12.5);
    CHECK(image_transport_from_string(to_string(ImageTransport::base64)) == ImageTransport::base64);
  }
}
