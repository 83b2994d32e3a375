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

#include "mrag/simworld.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <set>

#include "mrag/segment.hpp"

namespace mrag::sim {

namespace {

struct RelationSpec {
  const char* key;
  const char* en;
  const char* zh;
  const char* domain;
};

// Web relations in order of natural volatility; objects are entities.
constexpr std::array<RelationSpec, 10> kWebRelations = {{
    {"top_scorer", "top scorer", "最佳射手", "sports_recreation"},
    {"business_partner", "business partner", "商业伙伴", "companies_products"},
    {"head_coach", "head coach", "主教练", "sports_recreation"},
    {"mayor", "mayor", "市长", "politics_society"},
    {"chief_editor", "chief editor", "主编", "entertainment"},
    {"founder", "founder", "创始人", "companies_products"},
    {"architect", "architect", "建筑师", "culture_arts"},
    {"patron", "patron", "赞助人", "science_technology"},
    {"namesake", "namesake", "命名来源", "other"},
    {"birthplace", "birthplace", "出生地", "geography_places"},
}};

// Visual relations; objects are color literals.
constexpr std::array<RelationSpec, 6> kVisualRelations = {{
    {"emblem_color", "emblem color", "徽章颜色", "culture_arts"},
    {"banner_color", "banner color", "旗帜颜色", "politics_society"},
    {"facade_color", "facade color", "外墙颜色", "geography_places"},
    {"mascot_color", "mascot color", "吉祥物颜色", "entertainment"},
    {"livery_color", "livery color", "涂装颜色", "transportation"},
    {"uniform_color", "uniform color", "制服颜色", "sports_recreation"},
}};

constexpr std::array<std::pair<const char*, const char*>, 14> kColors = {{
    {"red", "红色"},
    {"blue", "蓝色"},
    {"green", "绿色"},
    {"yellow", "黄色"},
    {"black", "黑色"},
    {"white", "白色"},
    {"purple", "紫色"},
    {"orange", "橙色"},
    {"gray", "灰色"},
    {"brown", "棕色"},
    {"pink", "粉色"},
    {"gold", "金色"},
    {"silver", "银色"},
    {"teal", "青色"},
}};

constexpr std::array<const char*, 19> kOnsets = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r",
                                                 "s", "t", "v", "z", "br", "dr", "kr", "tr", "st"};
constexpr std::array<const char*, 5> kVowels = {"a", "e", "i", "o", "u"};
constexpr std::array<const char*, 4> kCodas = {"n", "r", "l", "s"};

const std::set<std::string, std::less<>>& stopwords() {
  static const std::set<std::string, std::less<>> words = {
      "a",  "an", "and", "are", "at",   "be",  "by",   "for",  "in",  "is",
      "of", "on", "the", "this", "to", "was", "what", "which", "who", "with"};
  return words;
}

const std::set<std::string, std::less<>>& freshness_words() {
  static const std::set<std::string, std::less<>> words = {"latest", "current", "newest", "now",
                                                           "recent"};
  return words;
}

// Tokens that a generated name must not collide with.
const std::set<std::string>& reserved_tokens() {
  static const std::set<std::string> words = [] {
    std::set<std::string> s(stopwords().begin(), stopwords().end());
    s.insert(freshness_words().begin(), freshness_words().end());
    for (const auto& r : kWebRelations) for (auto& t : segment(r.en)) s.insert(t);
    for (const auto& r : kVisualRelations) for (auto& t : segment(r.en)) s.insert(t);
    for (const auto& c : kColors) s.insert(c.first);
    for (const char* w : {"photo", "visitors", "often", "ask", "about", "entity", "image", "landmark",
                          "published", "answer", "unknown", "know", "don"}) {
      s.insert(w);
    }
    return s;
  }();
  return words;
}

std::string make_word(Rng& rng) {
  const int syllables = static_cast<int>(rng.between(2, 3));
  std::string w;
  for (int i = 0; i < syllables; ++i) {
    w += kOnsets[rng.below(kOnsets.size())];
    w += kVowels[rng.below(kVowels.size())];
    if (rng.chance(0.3)) w += kCodas[rng.below(kCodas.size())];
  }
  w[0] = static_cast<char>(w[0] - 'a' + 'A');
  return w;
}

std::string fresh_name(Rng& rng, std::set<std::string>& used) {
  for (;;) {
    std::string w = make_word(rng);
    std::string lower = to_lower_ascii(w);
    if (reserved_tokens().count(lower) || !used.insert(lower).second) continue;
    return w;
  }
}

std::string hex16(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string zero_pad(std::size_t v, int width) {
  std::string s = std::to_string(v);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

void tokenize(Document& d) {
  auto toks = segment(d.text);
  d.length = toks.size();
  std::sort(toks.begin(), toks.end());
  toks.erase(std::unique(toks.begin(), toks.end()), toks.end());
  d.tokens = std::move(toks);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    std::size_t p = s.find(sep, start);
    out.push_back(s.substr(start, p - start));
    if (p == std::string::npos) break;
    start = p + 1;
  }
  return out;
}

}  // namespace

// ---- Rng -----------------------------------------------------------------------

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw Error("Rng::below(0)");
  const std::uint64_t threshold = (0 - n) % n;
  for (;;) {
    const std::uint64_t r = next();
    if (r >= threshold) return r % n;
  }
}

std::int64_t Rng::between(std::int64_t lo, std::int64_t hi) {
  return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo) + 1));
}

double Rng::unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

bool is_stopword(std::string_view token) { return stopwords().count(token) > 0; }

bool has_freshness_word(const std::vector<std::string>& tokens) {
  return std::any_of(tokens.begin(), tokens.end(),
                     [](const std::string& t) { return freshness_words().count(t) > 0; });
}

// ---- Config ----------------------------------------------------------------------

Json WorldConfig::to_json() const {
  return Json{{"n_entities", n_entities},
              {"n_relations", n_relations},
              {"fast_fact_fraction", fast_fact_fraction},
              {"distractor_rate", distractor_rate},
              {"alias_rate", alias_rate},
              {"famous_rate", famous_rate},
              {"photo_coverage", photo_coverage},
              {"embed_dates", embed_dates},
              {"horizon_days", horizon_days}};
}

WorldConfig WorldConfig::from_json(const Json& j) {
  WorldConfig c;
  c.n_entities = j.value("n_entities", c.n_entities);
  c.n_relations = j.value("n_relations", c.n_relations);
  c.fast_fact_fraction = j.value("fast_fact_fraction", c.fast_fact_fraction);
  c.distractor_rate = j.value("distractor_rate", c.distractor_rate);
  c.alias_rate = j.value("alias_rate", c.alias_rate);
  c.famous_rate = j.value("famous_rate", c.famous_rate);
  c.photo_coverage = j.value("photo_coverage", c.photo_coverage);
  c.embed_dates = j.value("embed_dates", c.embed_dates);
  c.horizon_days = j.value("horizon_days", c.horizon_days);
  return c;
}

void WorldConfig::validate() const {
  auto bad = [](const std::string& m) { throw WorldError(WorldError::Kind::bad_config, m); };
  auto unit_interval = [&](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) bad(std::string(name) + " must lie in [0, 1]");
  };
  if (n_entities < 5) bad("n_entities must be at least 5");
  if (n_relations < 2 || n_relations > 16) bad("n_relations must lie in [2, 16]");
  const int n_visual = std::max(1, static_cast<int>(std::lround(n_relations / 3.0)));
  if (n_relations - n_visual > static_cast<int>(kWebRelations.size()) ||
      n_visual > static_cast<int>(kVisualRelations.size())) {
    bad("relation catalog too small for n_relations");
  }
  unit_interval(fast_fact_fraction, "fast_fact_fraction");
  unit_interval(distractor_rate, "distractor_rate");
  unit_interval(alias_rate, "alias_rate");
  unit_interval(famous_rate, "famous_rate");
  unit_interval(photo_coverage, "photo_coverage");
  if (horizon_days < 1) bad("horizon_days must be positive");
}

// ---- World -------------------------------------------------------------------------

std::string World::date_of(Day d) {
  using namespace std::chrono;
  const year_month_day ymd{sys_days{year{2024} / June / 1} + days{d}};
  return format_date(ymd);
}

std::chrono::year_month_day World::calendar_date() const {
  using namespace std::chrono;
  return year_month_day{sys_days{year{2024} / June / 1} + days{clock_}};
}

World World::generate(std::uint64_t seed, const WorldConfig& config) {
  config.validate();
  World w;
  w.seed_ = seed;
  w.config_ = config;
  Rng rng(seed);

  // Relations: fast ones first within each modality, the rest alternate
  // slow / never.
  const int n_visual = std::max(1, static_cast<int>(std::lround(config.n_relations / 3.0)));
  const int n_web = config.n_relations - n_visual;
  auto add_relations = [&](const auto& catalog, int count, Modality modality) {
    const int n_fast = static_cast<int>(std::lround(config.fast_fact_fraction * count));
    for (int i = 0; i < count; ++i) {
      Relation r{catalog[i].key, catalog[i].en, catalog[i].zh, modality, UpdateFreq::never,
                 catalog[i].domain};
      if (i < n_fast) r.volatility = UpdateFreq::fast;
      else r.volatility = (i - n_fast) % 2 == 0 ? UpdateFreq::slow : UpdateFreq::never;
      w.relations_.push_back(std::move(r));
    }
  };
  add_relations(kWebRelations, n_web, Modality::web);
  add_relations(kVisualRelations, n_visual, Modality::visual);

  std::set<std::string> used;
  for (int i = 0; i < config.n_entities; ++i) {
    Entity e;
    e.id = "e" + zero_pad(static_cast<std::size_t>(i), 3);
    e.name = fresh_name(rng, used);
    if (rng.chance(config.alias_rate)) e.aliases.push_back(fresh_name(rng, used));
    e.visual_signature = "vs-" + hex16(rng.next());
    e.famous = rng.chance(config.famous_rate);
    e.photo_indexed = rng.chance(config.photo_coverage);
    w.entities_.push_back(std::move(e));
  }

  const int n = config.n_entities;
  auto other_entity = [&](int not_a, int not_b) {
    for (;;) {
      const int x = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
      if (x != not_a && x != not_b) return x;
    }
  };
  for (int s = 0; s < n; ++s) {
    for (int r = 0; r < static_cast<int>(w.relations_.size()); ++r) {
      const Relation& rel = w.relations_[r];
      Fact f;
      f.subject = s;
      f.relation = r;
      const bool fast = rel.volatility == UpdateFreq::fast;
      f.valid_from = fast ? -rng.between(30, 365) : -rng.between(400, 4000);
      std::size_t color = 0;
      if (rel.modality == Modality::web) {
        f.object_entity = other_entity(s, s);
      } else {
        color = rng.below(kColors.size());
        f.object_literal = kColors[color].first;
        f.object_literal_zh = kColors[color].second;
      }
      if (!fast) {
        w.facts_.push_back(std::move(f));
        continue;
      }
      const Day change = rng.between(1, config.horizon_days);
      Fact next = f;
      f.valid_to = change;
      next.valid_from = change;
      next.version = 2;
      if (rel.modality == Modality::web) {
        next.object_entity = other_entity(s, *f.object_entity);
      } else {
        const std::size_t c2 = (color + 1 + rng.below(kColors.size() - 1)) % kColors.size();
        next.object_literal = kColors[c2].first;
        next.object_literal_zh = kColors[c2].second;
      }
      w.facts_.push_back(std::move(f));
      w.facts_.push_back(std::move(next));
    }
  }

  for (std::size_t fi = 0; fi < w.facts_.size(); ++fi) {
    const Fact& f = w.facts_[fi];
    const Relation& rel = w.relations_[f.relation];
    const Entity& subj = w.entities_[f.subject];
    Document d;
    d.kind = rel.modality == Modality::web ? DocKind::web : DocKind::image;
    d.subject = f.subject;
    d.fact = static_cast<int>(fi);
    d.published = f.valid_from;
    d.title = subj.name + ": " + rel.phrase_en;
    d.text = "The " + rel.phrase_en + " of " + subj.name + " is " + w.object_text(f) + ".";
    if (rng.chance(config.distractor_rate)) {
      int other = f.relation;
      while (other == f.relation) {
        other = static_cast<int>(rng.below(w.relations_.size()));
      }
      const int x = other_entity(f.subject, f.subject);
      d.text += " Visitors to " + subj.name + " often ask about the " +
                w.relations_[other].phrase_en + " of " + w.entities_[x].name + ".";
    }
    if (config.embed_dates) d.text += " (published " + date_of(d.published) + ")";
    if (d.kind == DocKind::web) {
      d.url = "sim://web/" + subj.id + "/" + rel.key + "/" + std::to_string(f.version);
    } else {
      d.url = "sim://page/" + subj.id + "/" + rel.key + "/" + std::to_string(f.version);
      d.image.locator = "sim://img/" + subj.id + "/" + rel.key + "/" + std::to_string(f.version);
    }
    w.documents_.push_back(std::move(d));
  }
  for (int s = 0; s < n; ++s) {
    const Entity& e = w.entities_[s];
    if (!e.photo_indexed) continue;
    Document d;
    d.kind = DocKind::photo;
    d.subject = s;
    d.published = -5000;
    d.title = e.name;
    d.text = "Photo of " + e.name + ".";
    d.url = "sim://page/" + e.id + "/photo";
    d.image.locator = std::string(kPhotoScheme) + e.id + "/1";
    w.documents_.push_back(std::move(d));
  }
  for (auto& d : w.documents_) {
    if (!d.image.locator.empty()) d.image.content_hash = sha256_hex(w.image_bytes(d.image.locator));
    tokenize(d);
  }
  w.index();
  return w;
}

void World::index() {
  token_to_entity_.clear();
  image_hash_to_entity_.clear();
  docs_by_subject_.assign(entities_.size(), {});
  facts_by_slot_.clear();
  for (std::size_t i = 0; i < entities_.size(); ++i) {
    const auto& e = entities_[i];
    token_to_entity_[to_lower_ascii(e.name)] = static_cast<int>(i);
    for (const auto& a : e.aliases) token_to_entity_[to_lower_ascii(a)] = static_cast<int>(i);
    for (int v = 0; v < 2; ++v) {
      image_hash_to_entity_[*entity_image(static_cast<int>(i), v).content_hash] = static_cast<int>(i);
    }
  }
  for (std::size_t i = 0; i < documents_.size(); ++i) {
    const auto& d = documents_[i];
    docs_by_subject_[d.subject].push_back(static_cast<int>(i));
    if (d.image.content_hash) image_hash_to_entity_[*d.image.content_hash] = d.subject;
  }
  for (std::size_t i = 0; i < facts_.size(); ++i) {
    facts_by_slot_[{facts_[i].subject, facts_[i].relation}].push_back(static_cast<int>(i));
  }
}

World World::advance_time(Day t) const {
  if (t < clock_) {
    throw WorldError(WorldError::Kind::time_regression,
                     "cannot move the clock back from day " + std::to_string(clock_) + " to day " +
                         std::to_string(t));
  }
  World w = *this;
  w.clock_ = t;
  return w;
}

const Fact* World::fact_at(int subject, int relation, Day t) const {
  auto it = facts_by_slot_.find({subject, relation});
  if (it == facts_by_slot_.end()) return nullptr;
  for (int i : it->second) {
    if (facts_[i].valid_at(t)) return &facts_[i];
  }
  return nullptr;
}

std::optional<int> World::relation_index(std::string_view key) const {
  for (std::size_t i = 0; i < relations_.size(); ++i) {
    if (relations_[i].key == key) return static_cast<int>(i);
  }
  return std::nullopt;
}

std::optional<int> World::entity_by_token(std::string_view token) const {
  auto it = token_to_entity_.find(to_lower_ascii(token));
  if (it == token_to_entity_.end()) return std::nullopt;
  return it->second;
}

std::string World::object_text(const Fact& f) const {
  return f.object_entity ? entities_[*f.object_entity].name : f.object_literal;
}

ImageRef World::entity_image(int entity, int variant) const {
  ImageRef ref;
  ref.locator = std::string(kPhotoScheme) + entities_.at(entity).id + "/" + std::to_string(variant);
  ref.content_hash = sha256_hex(image_bytes(ref.locator));
  return ref;
}

std::string World::image_bytes(const std::string& locator) const {
  auto entity_by_id = [&](const std::string& id) -> const Entity& {
    for (const auto& e : entities_) {
      if (e.id == id) return e;
    }
    throw Error("unknown sim image '" + locator + "'");
  };
  if (locator.rfind("sim://photo/", 0) == 0) {
    auto parts = split(locator.substr(12), '/');
    if (parts.size() != 2) throw Error("malformed sim image locator '" + locator + "'");
    return "mrag-sim-image\nphoto\n" + entity_by_id(parts[0]).visual_signature + "\n" + parts[1] + "\n";
  }
  if (locator.rfind("sim://img/", 0) == 0) {
    auto parts = split(locator.substr(10), '/');
    if (parts.size() != 3) throw Error("malformed sim image locator '" + locator + "'");
    return "mrag-sim-image\nimg\n" + entity_by_id(parts[0]).visual_signature + "\n" + parts[1] + "\n" +
           parts[2] + "\n";
  }
  throw Error("not a sim image locator: '" + locator + "'");
}

std::optional<int> World::entity_for_image_hash(const std::string& hash) const {
  auto it = image_hash_to_entity_.find(hash);
  if (it == image_hash_to_entity_.end()) return std::nullopt;
  return it->second;
}

std::vector<const Document*> World::search_text(const std::string& query, bool images, int k) const {
  const auto query_tokens = segment(query);
  std::set<std::string> qset(query_tokens.begin(), query_tokens.end());
  std::set<int> subjects;
  for (const auto& t : qset) {
    if (auto e = entity_by_token(t)) subjects.insert(*e);
  }
  const bool newest_first = has_freshness_word(query_tokens);

  struct Scored {
    const Document* doc;
    int index;
    std::size_t score;
  };
  std::vector<Scored> candidates;
  for (int s : subjects) {
    for (int di : docs_by_subject_[s]) {
      const Document& d = documents_[di];
      if (!visible(d)) continue;
      if ((d.kind == DocKind::web) == images) continue;
      std::size_t score = 0;
      for (const auto& t : qset) {
        if (!is_stopword(t) && std::binary_search(d.tokens.begin(), d.tokens.end(), t)) ++score;
      }
      candidates.push_back({&d, di, score});
    }
  }
  std::sort(candidates.begin(), candidates.end(), [&](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.doc->published != b.doc->published) {
      return newest_first ? a.doc->published > b.doc->published : a.doc->published < b.doc->published;
    }
    if (a.doc->length != b.doc->length) return a.doc->length < b.doc->length;
    return a.index < b.index;
  });
  std::vector<const Document*> out;
  for (const auto& c : candidates) {
    if (static_cast<int>(out.size()) >= k) break;
    out.push_back(c.doc);
  }
  return out;
}

std::vector<const Document*> World::search_image(const std::string& hash, int k) const {
  auto entity = entity_for_image_hash(hash);
  if (!entity || !entities_[*entity].photo_indexed) return {};
  std::vector<const Document*> photo, visuals;
  for (int di : docs_by_subject_[*entity]) {
    const Document& d = documents_[di];
    if (!visible(d)) continue;
    if (d.kind == DocKind::photo) photo.push_back(&d);
    else if (d.kind == DocKind::image) visuals.push_back(&d);
  }
  // Documents are stored fact-ordered: relation order, then version.
  photo.insert(photo.end(), visuals.begin(), visuals.end());
  if (static_cast<int>(photo.size()) > k) photo.resize(static_cast<std::size_t>(k));
  return photo;
}

Json World::manifest() const {
  return Json{{"format", "mrag-simworld-1"},
              {"seed", seed_},
              {"config", config_.to_json()},
              {"clock", clock_},
              {"date", date()}};
}

World World::from_manifest(const Json& manifest) {
  if (manifest.value("format", "") != "mrag-simworld-1") throw Error("not a sim world manifest");
  World w = generate(manifest.at("seed").get<std::uint64_t>(),
                     WorldConfig::from_json(manifest.at("config")));
  return w.advance_time(manifest.value("clock", Day{0}));
}

std::vector<Json> World::entity_records() const {
  std::vector<Json> out;
  for (const auto& e : entities_) {
    out.push_back(Json{{"id", e.id},
                       {"name", e.name},
                       {"aliases", e.aliases},
                       {"visual_signature", e.visual_signature},
                       {"famous", e.famous},
                       {"photo_indexed", e.photo_indexed}});
  }
  return out;
}

std::vector<Json> World::fact_records() const {
  std::vector<Json> out;
  for (const auto& f : facts_) {
    Json j{{"subject", entities_[f.subject].id},
           {"relation", relations_[f.relation].key},
           {"object", object_text(f)},
           {"version", f.version},
           {"valid_from", f.valid_from}};
    if (f.valid_to) j["valid_to"] = *f.valid_to;
    out.push_back(std::move(j));
  }
  return out;
}

std::vector<Json> World::document_records() const {
  std::vector<Json> out;
  for (const auto& d : documents_) {
    static constexpr const char* kinds[] = {"web", "image", "photo"};
    Json j{{"kind", kinds[static_cast<int>(d.kind)]},
           {"subject", entities_[d.subject].id},
           {"title", d.title},
           {"text", d.text},
           {"url", d.url},
           {"published", d.published}};
    if (!d.image.locator.empty()) j["image_url"] = d.image.locator;
    out.push_back(std::move(j));
  }
  return out;
}

// ---- Plans -------------------------------------------------------------------------

Json SimQuestionPlan::to_json(const World& world) const {
  Json hs = Json::array();
  for (const auto& h : hops) hs.push_back({{"relation", h.relation}, {"tool", std::string(to_string(h.tool))}});
  return Json{{"instance_id", instance_id},
              {"anchor", world.entities().at(anchor).id},
              {"hops", std::move(hs)},
              {"answer_update_frequency", std::string(to_string(update_freq))},
              {"reasoning_steps", std::string(to_string(hop_label))},
              {"needs_external_visual", visual ? "yes" : "no"}};
}

SimQuestionPlan SimQuestionPlan::from_json(const Json& j, const World& world) {
  SimQuestionPlan p;
  p.instance_id = j.at("instance_id").get<std::string>();
  const std::string anchor = j.at("anchor").get<std::string>();
  bool found = false;
  for (std::size_t i = 0; i < world.entities().size(); ++i) {
    if (world.entities()[i].id == anchor) {
      p.anchor = static_cast<int>(i);
      found = true;
    }
  }
  if (!found) throw WorldError(WorldError::Kind::bad_plan, "plan anchor '" + anchor + "' not in world");
  for (const auto& h : j.at("hops")) {
    auto tool = tool_from_string(h.at("tool").get<std::string>());
    if (!tool) throw WorldError(WorldError::Kind::bad_plan, "plan hop with unknown tool");
    p.hops.push_back({h.at("relation").get<std::string>(), *tool});
  }
  // Labels go through the dataset parser's enum handling.
  Json probe{{"id", p.instance_id},
             {"question_en", "x"},
             {"question_zh", "x"},
             {"image_url", "x"},
             {"answers", {"x"}},
             {"domain", "other"},
             {"answer_update_frequency", j.at("answer_update_frequency")},
             {"reasoning_steps", j.at("reasoning_steps")},
             {"needs_external_visual", j.at("needs_external_visual")},
             {"golden_query", "x"},
             {"last_verified", "2024-06-01"}};
  const VqaInstance labels = parse_instance(probe);
  p.update_freq = labels.update_freq;
  p.hop_label = labels.hops;
  p.visual = labels.needs_external_visual;
  p.validate(world);
  return p;
}

void SimQuestionPlan::validate(const World& world) const {
  auto bad = [&](const std::string& m) {
    throw WorldError(WorldError::Kind::bad_plan, "plan " + instance_id + ": " + m);
  };
  if (hops.size() < 2) bad("chain needs the identify hop and at least one relation");
  if (hops.front().relation != kIdentifyHop || hops.front().tool != ToolKind::image_search_by_image) {
    bad("first hop must identify the image");
  }
  for (std::size_t i = 1; i < hops.size(); ++i) {
    auto r = world.relation_index(hops[i].relation);
    if (!r) bad("unknown relation '" + hops[i].relation + "'");
    if (world.relations()[*r].tool() != hops[i].tool) bad("tool mismatch on hop " + std::to_string(i));
  }
  const Hops expect = hops.size() > 2 ? Hops::more_than_two : Hops::at_most_two;
  if (hop_label != expect) bad("hop label disagrees with chain length");
  const bool any_visual = std::any_of(hops.begin() + 1, hops.end(), [](const PlanHop& h) {
    return h.tool == ToolKind::image_search_by_text;
  });
  if (visual != any_visual) bad("visual label disagrees with chain tools");
  const auto& last = world.relations()[*world.relation_index(hops.back().relation)];
  if (update_freq != last.volatility) bad("update frequency disagrees with final relation");
}

namespace {

struct Walk {
  std::vector<int> path;  // entities visited
  const Fact* final_fact = nullptr;
};

Walk walk(const World& world, const SimQuestionPlan& plan) {
  Walk w;
  int cur = plan.anchor;
  w.path.push_back(cur);
  for (std::size_t i = 1; i < plan.hops.size(); ++i) {
    auto r = world.relation_index(plan.hops[i].relation);
    if (!r) throw WorldError(WorldError::Kind::bad_plan, "unknown relation " + plan.hops[i].relation);
    const Fact* f = world.current_fact(cur, *r);
    if (!f) {
      throw WorldError(WorldError::Kind::bad_plan, "no fact for hop " + std::to_string(i) + " of " +
                                                       plan.instance_id);
    }
    if (i + 1 == plan.hops.size()) {
      w.final_fact = f;
    } else {
      if (!f->object_entity) throw WorldError(WorldError::Kind::bad_plan, "intermediate hop yields a literal");
      cur = *f->object_entity;
      w.path.push_back(cur);
    }
  }
  return w;
}

}  // namespace

std::vector<std::string> oracle_answers(const World& world, const SimQuestionPlan& plan) {
  const Walk w = walk(world, plan);
  if (w.final_fact->object_entity) return {world.entities()[*w.final_fact->object_entity].name};
  return {w.final_fact->object_literal, w.final_fact->object_literal_zh};
}

std::vector<std::string> oracle_path(const World& world, const SimQuestionPlan& plan) {
  std::vector<std::string> out;
  for (int e : walk(world, plan).path) out.push_back(world.entities()[e].name);
  return out;
}

// ---- Mix ----------------------------------------------------------------------------

const std::array<CellKey, 12>& mix_cells() {
  static const std::array<CellKey, 12> cells = [] {
    std::array<CellKey, 12> c{};
    std::size_t i = 0;
    for (auto f : {UpdateFreq::fast, UpdateFreq::slow, UpdateFreq::never}) {
      for (auto h : {Hops::more_than_two, Hops::at_most_two}) {
        for (bool v : {true, false}) c[i++] = CellKey{f, h, v};
      }
    }
    return c;
  }();
  return cells;
}

const std::array<int, 12>& BenchmarkMix::table2_counts() {
  // Only the marginals and the fast/multi-hop/visual crosses are published;
  // the three-way split below is chosen to reproduce all of them.
  static const std::array<int, 12> counts = {60, 52, 118, 155,   // fast
                                             82, 45, 236, 131,   // slow
                                             95, 53, 274, 151};  // never
  return counts;
}

BenchmarkMix BenchmarkMix::table2() {
  BenchmarkMix m;
  const auto& c = table2_counts();
  for (std::size_t i = 0; i < 12; ++i) m.weights[i] = c[i];
  return m;
}

Json BenchmarkMix::to_json() const {
  Json cells = Json::array();
  for (std::size_t i = 0; i < 12; ++i) {
    const auto& k = mix_cells()[i];
    cells.push_back({{"answer_update_frequency", std::string(to_string(k.update_freq))},
                     {"reasoning_steps", std::string(to_string(k.hops))},
                     {"needs_external_visual", k.visual ? "yes" : "no"},
                     {"weight", weights[i]}});
  }
  return cells;
}

BenchmarkMix BenchmarkMix::from_json(const Json& j) {
  if (j.is_string() && j.get<std::string>() == "table2") return table2();
  BenchmarkMix m;
  if (!j.is_array()) throw WorldError(WorldError::Kind::bad_config, "mix must be \"table2\" or a cell list");
  for (const auto& cell : j) {
    bool matched = false;
    for (std::size_t i = 0; i < 12; ++i) {
      const auto& k = mix_cells()[i];
      if (cell.at("answer_update_frequency") == to_string(k.update_freq) &&
          cell.at("reasoning_steps") == to_string(k.hops) &&
          cell.at("needs_external_visual") == (k.visual ? "yes" : "no")) {
        m.weights[i] = cell.at("weight").get<double>();
        matched = true;
      }
    }
    if (!matched) throw WorldError(WorldError::Kind::bad_config, "unknown mix cell " + cell.dump());
  }
  return m;
}

std::array<int, 12> realize_counts(const BenchmarkMix& mix, int n) {
  if (n < 0) throw WorldError(WorldError::Kind::bad_config, "benchmark size must be non-negative");
  double total = 0.0;
  for (double w : mix.weights) {
    if (w < 0) throw WorldError(WorldError::Kind::bad_config, "mix weights must be non-negative");
    total += w;
  }
  if (total <= 0.0) throw WorldError(WorldError::Kind::bad_config, "mix weights sum to zero");

  std::array<double, 12> target{};
  std::array<int, 12> base{};
  int floor_sum = 0;
  for (std::size_t i = 0; i < 12; ++i) {
    target[i] = n * mix.weights[i] / total;
    base[i] = static_cast<int>(std::floor(target[i]));
    floor_sum += base[i];
  }
  const int extra = n - floor_sum;

  // Groups whose realized totals should track their targets.
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < 12; ++i) groups.push_back({i});
  auto group_of = [&](auto pred) {
    std::vector<std::size_t> g;
    for (std::size_t i = 0; i < 12; ++i) {
      if (pred(mix_cells()[i])) g.push_back(i);
    }
    groups.push_back(std::move(g));
  };
  for (auto f : {UpdateFreq::fast, UpdateFreq::slow, UpdateFreq::never}) {
    group_of([f](const CellKey& k) { return k.update_freq == f; });
  }
  for (auto h : {Hops::more_than_two, Hops::at_most_two}) {
    group_of([h](const CellKey& k) { return k.hops == h; });
  }
  for (bool v : {true, false}) group_of([v](const CellKey& k) { return k.visual == v; });
  group_of([](const CellKey& k) { return k.update_freq == UpdateFreq::fast && k.hops == Hops::more_than_two; });
  group_of([](const CellKey& k) { return k.update_freq == UpdateFreq::fast && k.visual; });
  group_of([](const CellKey& k) { return k.hops == Hops::more_than_two && k.visual; });

  std::array<int, 12> best = base;
  double best_max = INFINITY, best_sq = INFINITY;
  for (unsigned mask = 0; mask < (1u << 12); ++mask) {
    if (std::popcount(mask) != extra) continue;
    double worst = 0.0, sq = 0.0;
    for (const auto& g : groups) {
      double got = 0.0, want = 0.0;
      for (std::size_t i : g) {
        got += base[i] + ((mask >> i) & 1u);
        want += target[i];
      }
      const double dev = std::fabs(got - want);
      worst = std::max(worst, dev);
      sq += dev * dev;
    }
    if (worst < best_max - 1e-12 || (std::fabs(worst - best_max) <= 1e-12 && sq < best_sq - 1e-12)) {
      best_max = worst;
      best_sq = sq;
      for (std::size_t i = 0; i < 12; ++i) best[i] = base[i] + static_cast<int>((mask >> i) & 1u);
    }
  }
  return best;
}

// ---- Benchmark ------------------------------------------------------------------------

const SimQuestionPlan* Benchmark::plan_for(const std::string& instance_id) const {
  for (const auto& p : plans) {
    if (p.instance_id == instance_id) return &p;
  }
  return nullptr;
}

namespace {

std::string question_en(const World& world, const SimQuestionPlan& plan) {
  std::string q = "What is";
  for (std::size_t i = plan.hops.size() - 1; i >= 1; --i) {
    q += " the " + world.relations()[*world.relation_index(plan.hops[i].relation)].phrase_en + " of";
  }
  return q + " the entity in this image?";
}

std::string question_zh(const World& world, const SimQuestionPlan& plan) {
  std::string q = "图中这个实体的";
  for (std::size_t i = 1; i < plan.hops.size(); ++i) {
    if (i > 1) q += "的";
    q += world.relations()[*world.relation_index(plan.hops[i].relation)].phrase_zh;
  }
  return q + "是什么？";
}

VqaInstance make_instance(const World& world, const SimQuestionPlan& plan) {
  const Walk w = walk(world, plan);
  const Relation& last = world.relations()[*world.relation_index(plan.hops.back().relation)];
  VqaInstance inst;
  inst.id = plan.instance_id;
  inst.question_en = question_en(world, plan);
  inst.question_zh = question_zh(world, plan);
  inst.image = world.entity_image(plan.anchor, 0);
  inst.answers = oracle_answers(world, plan);
  inst.domain = last.domain;
  inst.update_freq = plan.update_freq;
  inst.hops = plan.hop_label;
  inst.needs_external_visual = plan.visual;
  inst.golden_query = last.phrase_en + " of " + world.entities()[w.path.back()].name;
  inst.last_verified = world.calendar_date();
  return inst;
}

}  // namespace

Benchmark generate_benchmark(const World& world, const BenchmarkMix& mix, int n) {
  const auto counts = realize_counts(mix, n);
  Rng rng(world.seed() ^ 0x9e3779b97f4a7c15ULL);
  const auto& rels = world.relations();
  std::vector<int> bridges;  // non-fast web relations usable mid-chain
  for (std::size_t i = 0; i < rels.size(); ++i) {
    if (rels[i].modality == Modality::web && rels[i].volatility != UpdateFreq::fast) {
      bridges.push_back(static_cast<int>(i));
    }
  }
  const int n_entities = static_cast<int>(world.entities().size());

  std::vector<SimQuestionPlan> plans;
  std::set<std::vector<int>> seen_chains;
  for (std::size_t c = 0; c < 12; ++c) {
    const CellKey key = mix_cells()[c];
    std::vector<int> finals;
    for (std::size_t i = 0; i < rels.size(); ++i) {
      if (rels[i].volatility == key.update_freq && (rels[i].modality == Modality::visual) == key.visual) {
        finals.push_back(static_cast<int>(i));
      }
    }
    if (counts[c] > 0 && (finals.empty() || (key.hops == Hops::more_than_two && bridges.empty()))) {
      throw WorldError(WorldError::Kind::infeasible_mix,
                       "world has no relations for cell " + std::string(to_string(key.update_freq)) + "/" +
                           std::string(to_string(key.hops)) + "/visual:" + (key.visual ? "yes" : "no"));
    }
    for (int j = 0; j < counts[c]; ++j) {
      bool placed = false;
      for (int attempt = 0; attempt < 5000 && !placed; ++attempt) {
        const int n_bridges = key.hops == Hops::at_most_two ? 0 : static_cast<int>(rng.between(1, 2));
        std::vector<int> chain;  // anchor, then relation indices
        const int anchor = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_entities)));
        chain.push_back(anchor);
        std::set<int> visited = {anchor};
        int cur = anchor;
        bool ok = true;
        for (int b = 0; b < n_bridges && ok; ++b) {
          const int r = bridges[rng.below(bridges.size())];
          const Fact* f = world.current_fact(cur, r);
          if (!f || !f->object_entity || !visited.insert(*f->object_entity).second) ok = false;
          else cur = *f->object_entity;
          chain.push_back(r);
        }
        if (!ok) continue;
        const int fr = finals[rng.below(finals.size())];
        const Fact* f = world.current_fact(cur, fr);
        if (!f) continue;
        if (f->object_entity && visited.count(*f->object_entity)) continue;
        chain.push_back(fr);
        if (!seen_chains.insert(chain).second) continue;

        SimQuestionPlan p;
        p.anchor = anchor;
        p.hops.push_back({std::string(kIdentifyHop), ToolKind::image_search_by_image});
        for (std::size_t i = 1; i < chain.size(); ++i) {
          p.hops.push_back({rels[chain[i]].key, rels[chain[i]].tool()});
        }
        p.update_freq = key.update_freq;
        p.hop_label = key.hops;
        p.visual = key.visual;
        plans.push_back(std::move(p));
        placed = true;
      }
      if (!placed) {
        throw WorldError(WorldError::Kind::infeasible_mix,
                         "could not find enough distinct chains for cell " + std::to_string(c));
      }
    }
  }

  rng.shuffle(plans);
  Benchmark b;
  std::vector<VqaInstance> instances;
  for (std::size_t i = 0; i < plans.size(); ++i) {
    plans[i].instance_id = "sim-" + zero_pad(i + 1, 4);
    plans[i].validate(world);
    instances.push_back(make_instance(world, plans[i]));
  }
  b.dataset = Dataset(std::move(instances));
  b.plans = std::move(plans);
  return b;
}

Benchmark refresh_answers(const World& world, const Benchmark& benchmark) {
  Benchmark b;
  std::vector<VqaInstance> instances;
  for (std::size_t i = 0; i < benchmark.plans.size(); ++i) {
    VqaInstance inst = benchmark.dataset[i];
    inst.answers = oracle_answers(world, benchmark.plans[i]);
    inst.last_verified = world.calendar_date();
    instances.push_back(std::move(inst));
  }
  b.dataset = Dataset(std::move(instances));
  b.plans = benchmark.plans;
  return b;
}

Dataset table2_fixture() {
  std::vector<VqaInstance> out;
  const auto& counts = BenchmarkMix::table2_counts();
  const auto& domains = domain_labels();
  std::size_t serial = 0;
  for (std::size_t c = 0; c < 12; ++c) {
    for (int j = 0; j < counts[c]; ++j, ++serial) {
      const auto& key = mix_cells()[c];
      VqaInstance inst;
      inst.id = "fx-" + zero_pad(serial + 1, 4);
      // 715 English and 737 Chinese questions, as published.
      if (serial % 2 == 0 && serial / 2 < 715) inst.question_en = "What is shown in picture " + std::to_string(serial) + "?";
      else inst.question_zh = "图片" + std::to_string(serial) + "里是什么？";
      inst.monolingual = true;
      inst.image.locator = "fixture/" + inst.id + ".jpg";
      inst.answers = {"answer " + std::to_string(serial)};
      inst.domain = std::string(domains[serial % domains.size()]);
      inst.update_freq = key.update_freq;
      inst.hops = key.hops;
      inst.needs_external_visual = key.visual;
      inst.golden_query = "query " + std::to_string(serial);
      inst.last_verified = std::chrono::year_month_day{std::chrono::year{2024} / 6 / 1};
      out.push_back(std::move(inst));
    }
  }
  return Dataset(std::move(out));
}

// ---- Backends ---------------------------------------------------------------------------

SearchResponse<WebHit> SimSearchBackend::web_search(const std::string& query, int k) {
  SearchResponse<WebHit> r;
  for (const Document* d : world_->search_text(query, false, k)) {
    r.hits.push_back(WebHit{d->title, d->text, std::nullopt, d->url, 0});
  }
  r.latency_ms = latency_.search_base_ms + latency_.search_per_hit_ms * static_cast<double>(r.hits.size());
  r.retrieved_at = world_->date();
  return r;
}

SearchResponse<ImageHit> SimSearchBackend::image_hits(const std::vector<const Document*>& docs) {
  SearchResponse<ImageHit> r;
  for (const Document* d : docs) r.hits.push_back(ImageHit{d->image, d->text, d->url, 0});
  r.latency_ms = latency_.search_base_ms + latency_.search_per_hit_ms * static_cast<double>(r.hits.size());
  r.retrieved_at = world_->date();
  return r;
}

SearchResponse<ImageHit> SimSearchBackend::image_search_by_image(const ImageRef& image, int k) {
  if (!image.content_hash) return image_hits({});
  return image_hits(world_->search_image(*image.content_hash, k));
}

SearchResponse<ImageHit> SimSearchBackend::image_search_by_text(const std::string& query, int k) {
  return image_hits(world_->search_text(query, true, k));
}

std::string SimImageResolver::fetch(const std::string& locator) { return world_->image_bytes(locator); }

}  // namespace mrag::sim
