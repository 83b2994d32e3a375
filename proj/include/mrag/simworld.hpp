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

#include <array>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "mrag/action_grammar.hpp"
#include "mrag/common.hpp"
#include "mrag/dataset.hpp"
#include "mrag/toolbox.hpp"

// Deterministic synthetic knowledge world: entities, versioned facts,
// searchable documents and pseudo-images, plus a benchmark generator whose
// questions are answerable only by walking the fact graph.
namespace mrag::sim {

/// Seeded generator. Bounded draws are computed here rather than through
/// the standard distributions, whose outputs differ between library
/// implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Uniform in [lo, hi].
  std::int64_t between(std::int64_t lo, std::int64_t hi);
  double unit();
  bool chance(double p) { return unit() < p; }
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 engine_;
};

class WorldError : public Error {
 public:
  enum class Kind { bad_config, infeasible_mix, time_regression, bad_plan };
  WorldError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct WorldConfig {
  int n_entities = 100;
  int n_relations = 12;
  double fast_fact_fraction = 0.25;
  double distractor_rate = 0.2;
  double alias_rate = 0.2;
  double famous_rate = 0.5;
  /// Fraction of entities whose reference photo is in the image index.
  double photo_coverage = 1.0;
  /// Easy mode: documents carry their publication date.
  bool embed_dates = false;
  /// Fast facts change once within (0, horizon_days].
  int horizon_days = 180;

  Json to_json() const;
  static WorldConfig from_json(const Json& j);
  /// Throws WorldError(bad_config).
  void validate() const;
};

enum class Modality { web, visual };

struct Relation {
  std::string key;
  std::string phrase_en;
  std::string phrase_zh;
  Modality modality = Modality::web;
  UpdateFreq volatility = UpdateFreq::never;
  std::string domain;

  ToolKind tool() const {
    return modality == Modality::web ? ToolKind::web_search : ToolKind::image_search_by_text;
  }
};

struct Entity {
  std::string id;
  std::string name;
  std::vector<std::string> aliases;
  std::string visual_signature;
  bool famous = false;
  bool photo_indexed = true;
};

/// Day number relative to the world epoch (day 0 = generation time).
using Day = std::int64_t;

struct Fact {
  int subject = 0;
  int relation = 0;
  std::optional<int> object_entity;
  std::string object_literal;
  std::string object_literal_zh;
  Day valid_from = 0;
  std::optional<Day> valid_to;
  int version = 1;

  bool valid_at(Day t) const { return valid_from <= t && (!valid_to || t < *valid_to); }
};

enum class DocKind { web, image, photo };

struct Document {
  DocKind kind = DocKind::web;
  int subject = 0;
  std::optional<int> fact;  // empty for photos
  std::string title;
  std::string text;
  std::string url;
  ImageRef image;  // image and photo documents
  Day published = 0;
  std::vector<std::string> tokens;  // distinct, sorted
  std::size_t length = 0;           // token count
};

inline constexpr std::string_view kPhotoScheme = "sim://photo/";

class World {
 public:
  /// Throws WorldError(bad_config).
  static World generate(std::uint64_t seed, const WorldConfig& config);

  /// Snapshot at `t`; throws WorldError(time_regression) when t < clock.
  World advance_time(Day t) const;

  std::uint64_t seed() const { return seed_; }
  const WorldConfig& config() const { return config_; }
  Day clock() const { return clock_; }
  std::string date() const { return date_of(clock_); }
  static std::string date_of(Day d);
  std::chrono::year_month_day calendar_date() const;

  const std::vector<Entity>& entities() const { return entities_; }
  const std::vector<Relation>& relations() const { return relations_; }
  const std::vector<Fact>& facts() const { return facts_; }
  const std::vector<Document>& documents() const { return documents_; }

  bool visible(const Document& d) const { return d.published <= clock_; }
  const Fact* fact_at(int subject, int relation, Day t) const;
  const Fact* current_fact(int subject, int relation) const { return fact_at(subject, relation, clock_); }
  std::optional<int> relation_index(std::string_view key) const;
  std::optional<int> entity_by_token(std::string_view token) const;
  std::string object_text(const Fact& f) const;

  /// Question image (variant 0) and indexed reference photo (variant 1).
  ImageRef entity_image(int entity, int variant) const;
  /// Bytes behind a sim image locator; throws mrag::Error when unknown.
  std::string image_bytes(const std::string& locator) const;
  /// Entity depicted by an image with this content hash.
  std::optional<int> entity_for_image_hash(const std::string& hash) const;

  /// Search over visible documents (see docs/protocol.md for the ranking).
  std::vector<const Document*> search_text(const std::string& query, bool images, int k) const;
  std::vector<const Document*> search_image(const std::string& hash, int k) const;

  /// {seed, config, clock}; enough to regenerate this snapshot exactly.
  Json manifest() const;
  static World from_manifest(const Json& manifest);
  std::string manifest_hash() const { return sha256_hex(to_line(manifest())); }

  /// Line records for inspection: entities, facts, documents.
  std::vector<Json> entity_records() const;
  std::vector<Json> fact_records() const;
  std::vector<Json> document_records() const;

 private:
  void index();

  std::uint64_t seed_ = 0;
  WorldConfig config_;
  Day clock_ = 0;
  std::vector<Entity> entities_;
  std::vector<Relation> relations_;
  std::vector<Fact> facts_;
  std::vector<Document> documents_;
  std::unordered_map<std::string, int> token_to_entity_;
  std::unordered_map<std::string, int> image_hash_to_entity_;
  std::vector<std::vector<int>> docs_by_subject_;
  std::map<std::pair<int, int>, std::vector<int>> facts_by_slot_;
};

/// Query words that flip recency ordering to newest first.
bool has_freshness_word(const std::vector<std::string>& tokens);
bool is_stopword(std::string_view token);

// ---- Benchmark -------------------------------------------------------------

struct PlanHop {
  std::string relation;  // "identify" for the image identification hop
  ToolKind tool = ToolKind::web_search;
  bool operator==(const PlanHop&) const = default;
};

inline constexpr std::string_view kIdentifyHop = "identify";

struct SimQuestionPlan {
  std::string instance_id;
  int anchor = 0;  // entity shown in the question image
  std::vector<PlanHop> hops;
  UpdateFreq update_freq = UpdateFreq::never;
  Hops hop_label = Hops::at_most_two;
  bool visual = false;

  Json to_json(const World& world) const;
  static SimQuestionPlan from_json(const Json& j, const World& world);
  /// Throws WorldError(bad_plan) when labels disagree with the chain.
  void validate(const World& world) const;
  bool operator==(const SimQuestionPlan&) const = default;
};

/// Answers obtained by walking the chain at the world clock: the canonical
/// object text plus its Chinese literal for colors.
std::vector<std::string> oracle_answers(const World& world, const SimQuestionPlan& plan);
/// Entity names visited by the walk, anchor first.
std::vector<std::string> oracle_path(const World& world, const SimQuestionPlan& plan);

/// Cell order: update_freq (fast, slow, never) x hops (>2-hop, <=2-hop) x
/// visual (yes, no).
struct CellKey {
  UpdateFreq update_freq;
  Hops hops;
  bool visual;
};
const std::array<CellKey, 12>& mix_cells();

struct BenchmarkMix {
  std::array<double, 12> weights{};

  /// Joint label counts matching the published corpus marginals.
  static BenchmarkMix table2();
  static const std::array<int, 12>& table2_counts();
  Json to_json() const;
  static BenchmarkMix from_json(const Json& j);
};

/// Integer cell counts summing to n that stay closest to the weighted
/// targets over cells, marginals and the fast/multi-hop/visual crosses.
std::array<int, 12> realize_counts(const BenchmarkMix& mix, int n);

struct Benchmark {
  Dataset dataset;
  std::vector<SimQuestionPlan> plans;  // same order as the dataset

  const SimQuestionPlan* plan_for(const std::string& instance_id) const;
};

/// Throws WorldError(infeasible_mix).
Benchmark generate_benchmark(const World& world, const BenchmarkMix& mix, int n);

/// Same questions with answers re-evaluated at the world clock.
Benchmark refresh_answers(const World& world, const Benchmark& benchmark);

/// Fixture with the published per-label counts (1452 instances), built from
/// the joint counts of BenchmarkMix::table2(). Text fields are synthetic.
Dataset table2_fixture();

// ---- Backends ----------------------------------------------------------------

struct SimLatency {
  double search_base_ms = 900.0;
  double search_per_hit_ms = 40.0;
};

class SimSearchBackend : public SearchBackend {
 public:
  explicit SimSearchBackend(std::shared_ptr<const World> world, SimLatency latency = {})
      : world_(std::move(world)), latency_(latency) {}
  SearchResponse<WebHit> web_search(const std::string& query, int k) override;
  SearchResponse<ImageHit> image_search_by_image(const ImageRef& image, int k) override;
  SearchResponse<ImageHit> image_search_by_text(const std::string& query, int k) override;

 private:
  SearchResponse<ImageHit> image_hits(const std::vector<const Document*>& docs);
  std::shared_ptr<const World> world_;
  SimLatency latency_;
};

class SimImageResolver : public ImageResolver {
 public:
  explicit SimImageResolver(std::shared_ptr<const World> world) : world_(std::move(world)) {}
  std::string fetch(const std::string& locator) override;

 private:
  std::shared_ptr<const World> world_;
};

}  // namespace mrag::sim
