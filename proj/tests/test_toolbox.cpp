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

#include "doctest.h"
#include "mrag/simworld.hpp"
#include "mrag/toolbox.hpp"

using namespace mrag;

namespace {

// Returns canned hits and can fail a number of times first.
class FakeSearch : public SearchBackend {
 public:
  std::vector<WebHit> web;
  std::vector<ImageHit> images;
  int failures = 0;
  BackendError::Kind failure_kind = BackendError::Kind::transient;
  int calls = 0;

  SearchResponse<WebHit> web_search(const std::string&, int) override {
    maybe_fail();
    return {web, 10.0, "2024-06-01"};
  }
  SearchResponse<ImageHit> image_search_by_image(const ImageRef&, int) override {
    maybe_fail();
    return {images, 10.0, "2024-06-01"};
  }
  SearchResponse<ImageHit> image_search_by_text(const std::string&, int) override {
    maybe_fail();
    return {images, 10.0, "2024-06-01"};
  }

 private:
  void maybe_fail() {
    ++calls;
    if (failures > 0) {
      --failures;
      throw BackendError(failure_kind, "fake failure");
    }
  }
};

ImageHit image(const std::string& locator, const std::string& hash, const std::string& caption) {
  return ImageHit{ImageRef{locator, hash}, caption, "https://example.org/" + locator, 0};
}

struct SimFixture {
  std::shared_ptr<const sim::World> world;
  Toolbox toolbox;
  explicit SimFixture(sim::WorldConfig cfg = {}, std::uint64_t seed = 7)
      : world(std::make_shared<const sim::World>(sim::World::generate(seed, cfg))),
        toolbox(std::make_shared<sim::SimSearchBackend>(world),
                std::make_shared<sim::SimImageResolver>(world)) {}
};

void check_ranks(const EvidenceBundle& b) {
  for (std::size_t i = 0; i < b.hits.size(); ++i) {
    const int rank = std::visit([](const auto& h) { return h.rank; }, b.hits[i]);
    CHECK(rank == static_cast<int>(i) + 1);
  }
  CHECK(static_cast<int>(b.hits.size()) <= b.k_requested);
}

}  // namespace

TEST_SUITE("toolbox") {
  TEST_CASE("web search finds the fact document") {
    sim::WorldConfig cfg;
    cfg.distractor_rate = 0.0;
    SimFixture f(cfg);
    const auto& w = *f.world;
    int checked = 0;
    for (const char* key : {"mayor", "founder", "architect"}) {
      const int r = *w.relation_index(key);
      for (int e = 0; e < 10; ++e) {
        const std::string q = w.relations()[r].phrase_en + " of " + w.entities()[e].name;
        const EvidenceBundle b = f.toolbox.web_search(q, 3);
        REQUIRE_FALSE(b.hits.empty());
        const auto& top = std::get<WebHit>(b.hits.front());
        CHECK(top.description.find(w.object_text(*w.current_fact(e, r))) != std::string::npos);
        CHECK(b.query == q);
        CHECK(b.retrieved_at == w.date());
        check_ranks(b);
        ++checked;
      }
    }
    CHECK(checked == 30);
  }

  TEST_CASE("web search: no match and truncation") {
    SimFixture f;
    CHECK(f.toolbox.web_search("nothing here matches", 3).hits.empty());
    const std::string name = f.world->entities()[0].name;
    CHECK(f.toolbox.web_search(name, 1).hits.size() == 1);
    CHECK(f.toolbox.web_search(name, 5).hits.size() == 5);
    CHECK_THROWS_AS(f.toolbox.web_search("   ", 3), ToolboxError);
    CHECK_THROWS_AS(f.toolbox.web_search("x", 0), ToolboxError);
  }

  TEST_CASE("image search by image identifies the entity") {
    SimFixture f;
    const auto& w = *f.world;
    for (int e = 0; e < 20; ++e) {
      const EvidenceBundle b = f.toolbox.image_search_by_image(w.entity_image(e, 0), 3);
      REQUIRE_FALSE(b.hits.empty());
      CHECK(std::get<ImageHit>(b.hits.front()).caption.find(w.entities()[e].name) != std::string::npos);
      check_ranks(b);
    }
  }

  TEST_CASE("image search by image: unknown entity and large k") {
    SimFixture f;
    const EvidenceBundle none = f.toolbox.image_search_by_image(ImageRef{"x", std::string(64, '0')}, 3);
    CHECK(none.hits.empty());
    const EvidenceBundle all = f.toolbox.image_search_by_image(f.world->entity_image(0, 0), kAllTopK);
    CHECK(all.hits.size() < static_cast<std::size_t>(kAllTopK));
    CHECK(all.hits.size() == f.world->search_image(*f.world->entity_image(0, 0).content_hash, 100).size());
    CHECK_THROWS_AS(f.toolbox.image_search_by_image(ImageRef{"sim://nope/1", std::nullopt}, 3), ToolboxError);
  }

  TEST_CASE("image search by text returns captions about the entity") {
    SimFixture f;
    const auto& w = *f.world;
    const std::string name = w.entities()[4].name;
    const EvidenceBundle b = f.toolbox.image_search_by_text(name + " emblem", 3);
    REQUIRE_FALSE(b.hits.empty());
    for (const auto& h : b.hits) CHECK(std::get<ImageHit>(h).caption.find(name) != std::string::npos);
    CHECK(f.toolbox.image_search_by_text("zzz qqq", 3).hits.empty());
  }

  TEST_CASE("sim retrieval is deterministic") {
    SimFixture a, b;
    const std::string q = "head coach of " + a.world->entities()[3].name;
    CHECK(a.toolbox.web_search(q, 3) == b.toolbox.web_search(q, 3));
  }

  TEST_CASE("normalization: dedup, empty hits, renumbering") {
    auto fake = std::make_shared<FakeSearch>();
    fake->images = {image("a", "h1", "one"), image("b", "h1", "dup"), image("c", "h2", "two"),
                    image("d", "h3", "")};
    fake->web = {WebHit{"", "", std::nullopt, "u0", 9}, WebHit{"T", "", std::nullopt, "u1", 4},
                 WebHit{"", "D", std::nullopt, "u2", 7}};
    Toolbox t(fake, nullptr);
    const EvidenceBundle img = t.image_search_by_text("q", 5);
    REQUIRE(img.hits.size() == 3);
    CHECK(std::get<ImageHit>(img.hits[1]).caption == "two");
    check_ranks(img);
    const EvidenceBundle web = t.web_search("q", 5);
    REQUIRE(web.hits.size() == 2);
    CHECK(std::get<WebHit>(web.hits[0]).url == "u1");
    check_ranks(web);
    CHECK(t.image_search_by_text("q", 1).hits.size() == 1);
  }

  TEST_CASE("transient search failures are retried") {
    auto fake = std::make_shared<FakeSearch>();
    fake->web = {WebHit{"T", "D", std::nullopt, "u", 1}};
    fake->failures = 2;
    Toolbox t(fake, nullptr);
    t.set_sleeper([](double) {});
    CHECK(t.web_search("q", 3).hits.size() == 1);
    CHECK(fake->calls == 3);

    fake->failures = 100;
    CHECK_THROWS_AS(t.web_search("q", 3), BackendError);
    CHECK(fake->calls == 3 + 4);

    fake->failures = 1;
    fake->failure_kind = BackendError::Kind::permanent;
    CHECK_THROWS_AS(t.web_search("q", 3), BackendError);
  }

  TEST_CASE("cache keyed by tool, query and k") {
    auto fake = std::make_shared<FakeSearch>();
    fake->web = {WebHit{"T", "D", std::nullopt, "u", 1}};
    ToolboxConfig cfg;
    cfg.cache_enabled = true;
    Toolbox t(fake, nullptr, cfg);
    t.web_search("q", 3);
    const EvidenceBundle again = t.web_search("q", 3);
    CHECK(fake->calls == 1);
    CHECK(again.latency_ms == 0.0);
    t.web_search("q", 2);
    t.image_search_by_text("q", 3);
    CHECK(fake->calls == 3);
  }

  TEST_CASE("dispatch resolves image slots") {
    SimFixture f;
    const ImageRef img = f.world->entity_image(2, 0);
    const EvidenceBundle b =
        f.toolbox.dispatch(ToolKind::image_search_by_image, "input_image", 3, {{"input_image", img}});
    CHECK(b.query == "input_image");
    CHECK(b.tool == ToolKind::image_search_by_image);
    CHECK_FALSE(b.hits.empty());
    CHECK_THROWS_AS(f.toolbox.dispatch(ToolKind::image_search_by_image, "img:000000000000", 3, {}),
                    ToolboxError);
    CHECK(f.toolbox.dispatch(ToolKind::web_search, "mayor", 3).tool == ToolKind::web_search);
  }

  TEST_CASE("content parts parsing and top-k") {
    CHECK(ContentParts::parse("title,description") ==
          ContentParts{true, true, false, false, false});
    CHECK(ContentParts::parse(ContentParts{}.to_string()) == ContentParts{});
    CHECK_THROWS(ContentParts::parse("title,bogus"));
    CHECK_THROWS(ContentParts::parse(""));
    CHECK(parse_top_k("5") == 5);
    CHECK(parse_top_k("ALL") == kAllTopK);
    CHECK_THROWS_AS(parse_top_k("0"), ToolboxError);
    CHECK_THROWS_AS(parse_top_k("3x"), ToolboxError);
  }

  TEST_CASE("format_evidence renders enabled parts only") {
    EvidenceBundle web;
    web.tool = ToolKind::web_search;
    web.k_requested = 3;
    web.hits = {WebHit{"Zenda", "Capital of Freedonia.", std::string("Zenda has a cathedral."), "u1", 1},
                WebHit{"Other", "Nothing.", std::nullopt, "u2", 2}};
    const std::string plain = format_evidence(web, ContentParts{});
    CHECK(plain == "[1] Title: Zenda\nDescription: Capital of Freedonia.\n[2] Title: Other\nDescription: Nothing.");
    ContentParts related;
    related.include_related = true;
    const std::string with = format_evidence(web, related);
    const auto desc = with.find("Description: Capital");
    const auto rel = with.find("Related: Zenda has a cathedral.");
    CHECK(rel != std::string::npos);
    CHECK(desc < rel);
    CHECK(rel < with.find("[2]"));

    EvidenceBundle img;
    img.tool = ToolKind::image_search_by_image;
    img.k_requested = 3;
    img.hits = {image("a", std::string(64, 'a'), "Photo of Zenda.")};
    ContentParts no_caption;
    no_caption.include_caption = false;
    const std::string ic = format_evidence(img, no_caption);
    CHECK(ic.find("Caption") == std::string::npos);
    CHECK(ic == "[1] Image: img:aaaaaaaaaaaa");
    CHECK(format_evidence(EvidenceBundle{}, ContentParts{}) == "(no results)");
  }

  TEST_CASE("format_evidence truncates at hit boundaries") {
    EvidenceBundle b;
    b.k_requested = 3;
    for (int i = 0; i < 3; ++i) {
      b.hits.push_back(WebHit{"T" + std::to_string(i), std::string(40, 'x'), std::nullopt, "u", i + 1});
    }
    const std::string full = format_evidence(b, ContentParts{});
    CHECK(format_evidence(b, ContentParts{}, full.size()) == full);
    const std::string two = format_evidence(b, ContentParts{}, full.size() - 1);
    CHECK(two.find("[3]") == std::string::npos);
    CHECK(two.find("[2]") != std::string::npos);
    CHECK(two.find("[truncated: 2 of 3 results]") != std::string::npos);
    CHECK(two.size() <= full.size() - 1);

    const std::string tiny = format_evidence(b, ContentParts{}, 20);
    CHECK(tiny.rfind("[1]", 0) == 0);
    CHECK(tiny.find("[2]") == std::string::npos);
    CHECK(tiny.find("first clipped") != std::string::npos);
    CHECK(format_evidence(b, ContentParts{}, 20) == tiny);
  }

  TEST_CASE("bundle json round trip") {
    SimFixture f;
    const EvidenceBundle a = f.toolbox.image_search_by_image(f.world->entity_image(1, 0), 3);
    CHECK(EvidenceBundle::from_json(a.to_json()) == a);
    const EvidenceBundle w = f.toolbox.web_search("mayor of " + f.world->entities()[1].name, 3);
    CHECK(EvidenceBundle::from_json(w.to_json()) == w);
  }
}
