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

#include "mrag/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <sstream>

#include "mrag/kernels.hpp"
#include "mrag/segment.hpp"

namespace mrag {

std::string_view to_string(UpdateFreq f) {
  switch (f) {
    case UpdateFreq::fast: return "fast";
    case UpdateFreq::slow: return "slow";
    case UpdateFreq::never: return "never";
  }
  return "never";
}

std::string_view to_string(Hops h) { return h == Hops::at_most_two ? "<=2-hop" : ">2-hop"; }

const std::array<std::string_view, 9>& domain_labels() {
  static const std::array<std::string_view, 9> labels = {
      "sports_recreation", "companies_products", "entertainment",
      "politics_society",  "science_technology", "geography_places",
      "culture_arts",      "transportation",     "other"};
  return labels;
}

namespace {

using Kind = DatasetError::Kind;

std::string record_id_of(const Json& record) {
  if (record.is_object()) {
    auto it = record.find("id");
    if (it != record.end() && it->is_string()) return it->get<std::string>();
  }
  return "<unknown>";
}

[[noreturn]] void fail(Kind kind, const std::string& field, const std::string& id,
                       const std::string& detail) {
  throw DatasetError(kind, field, id, "record '" + id + "', field '" + field + "': " + detail);
}

const Json& require(const Json& record, const char* field, const std::string& id) {
  auto it = record.find(field);
  if (it == record.end() || it->is_null()) fail(Kind::missing_field, field, id, "missing");
  return *it;
}

std::string require_string(const Json& record, const char* field, const std::string& id,
                           bool allow_empty = false) {
  const Json& v = require(record, field, id);
  if (!v.is_string()) fail(Kind::invalid_value, field, id, "expected a string");
  auto s = v.get<std::string>();
  if (!allow_empty && trim(s).empty()) fail(Kind::missing_field, field, id, "empty");
  return s;
}

UpdateFreq parse_update_freq(const std::string& raw, const std::string& id) {
  const std::string s = to_lower_ascii(trim(raw));
  if (s == "fast" || s == "fast updating" || s == "fast-changing" || s == "fast changing")
    return UpdateFreq::fast;
  if (s == "slow" || s == "slow updating" || s == "slow-changing" || s == "slow changing")
    return UpdateFreq::slow;
  if (s == "never" || s == "never updating" || s == "never-changing" || s == "never changing")
    return UpdateFreq::never;
  fail(Kind::bad_enum_value, "answer_update_frequency", id, "unknown value '" + raw + "'");
}

Hops parse_hops(const std::string& raw, const std::string& id) {
  std::string s;
  for (char c : trim(raw)) {
    if (c != ' ') s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (s == "<=2-hop" || s == "\xE2\x89\xA4" "2-hop" || s == "<=2" || s == "\xE2\x89\xA4" "2")
    return Hops::at_most_two;
  if (s == ">2-hop" || s == ">2") return Hops::more_than_two;
  fail(Kind::bad_enum_value, "reasoning_steps", id, "unknown value '" + raw + "'");
}

bool parse_yes_no(const Json& v, const char* field, const std::string& id) {
  if (v.is_boolean()) return v.get<bool>();
  if (v.is_string()) {
    const std::string s = to_lower_ascii(trim(v.get<std::string>()));
    if (s == "yes" || s == "true") return true;
    if (s == "no" || s == "false") return false;
  }
  fail(Kind::bad_enum_value, field, id, "expected yes/no, got " + v.dump());
}

}  // namespace

const std::string& VqaInstance::question(Language lang) const {
  const std::string& primary = lang == Language::en ? question_en : question_zh;
  if (!primary.empty()) return primary;
  return lang == Language::en ? question_zh : question_en;
}

bool VqaInstance::has_question(Language lang) const {
  return !(lang == Language::en ? question_en : question_zh).empty();
}

std::string format_date(const std::chrono::year_month_day& d) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(d.year()),
                static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
  return buf;
}

std::chrono::year_month_day parse_date(std::string_view s) {
  int y = 0;
  unsigned m = 0, d = 0;
  char tail = 0;
  const std::string str(s);
  if (str.size() != 10 || std::sscanf(str.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3) {
    throw Error("invalid date '" + str + "' (expected YYYY-MM-DD)");
  }
  std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!ymd.ok()) throw Error("invalid date '" + str + "'");
  return ymd;
}

VqaInstance parse_instance(const Json& record) {
  const std::string id = record_id_of(record);
  if (!record.is_object()) fail(Kind::invalid_value, "<record>", id, "record is not an object");

  VqaInstance inst;
  inst.id = require_string(record, "id", id);
  if (auto it = record.find("monolingual"); it != record.end() && !it->is_null()) {
    inst.monolingual = parse_yes_no(*it, "monolingual", id);
  }
  inst.question_en = require_string(record, "question_en", id, /*allow_empty=*/true);
  inst.question_zh = require_string(record, "question_zh", id, /*allow_empty=*/true);
  const bool en_empty = trim(inst.question_en).empty();
  const bool zh_empty = trim(inst.question_zh).empty();
  if (en_empty && zh_empty) fail(Kind::missing_field, "question_en", id, "both questions empty");
  if ((en_empty || zh_empty) && !inst.monolingual) {
    fail(Kind::missing_field, en_empty ? "question_en" : "question_zh", id,
         "empty question in a record not flagged monolingual");
  }

  inst.image.locator = require_string(record, "image_url", id);
  if (auto it = record.find("image_hash"); it != record.end() && !it->is_null()) {
    if (!it->is_string()) fail(Kind::invalid_value, "image_hash", id, "expected a string");
    inst.image.content_hash = it->get<std::string>();
  }

  const Json& answers = require(record, "answers", id);
  if (!answers.is_array()) fail(Kind::invalid_value, "answers", id, "expected a list");
  if (answers.empty()) fail(Kind::empty_answer_list, "answers", id, "answer list is empty");
  for (const auto& a : answers) {
    if (!a.is_string()) fail(Kind::invalid_value, "answers", id, "answers must be strings");
    auto text = a.get<std::string>();
    if (segment(text).empty()) {
      fail(Kind::empty_answer_list, "answers", id, "answer '" + text + "' is blank after normalization");
    }
    inst.answers.push_back(std::move(text));
  }

  inst.domain = require_string(record, "domain", id);
  const auto& labels = domain_labels();
  if (std::find(labels.begin(), labels.end(), inst.domain) == labels.end()) {
    fail(Kind::bad_enum_value, "domain", id, "unknown domain '" + inst.domain + "'");
  }
  inst.update_freq = parse_update_freq(require_string(record, "answer_update_frequency", id), id);
  inst.hops = parse_hops(require_string(record, "reasoning_steps", id), id);
  inst.needs_external_visual =
      parse_yes_no(require(record, "needs_external_visual", id), "needs_external_visual", id);
  inst.golden_query = require_string(record, "golden_query", id);
  try {
    inst.last_verified = parse_date(require_string(record, "last_verified", id));
  } catch (const DatasetError&) {
    throw;
  } catch (const Error& e) {
    fail(Kind::invalid_value, "last_verified", id, e.what());
  }
  return inst;
}

VqaInstance parse_instance_line(std::string_view line) {
  Json record;
  try {
    record = Json::parse(line);
  } catch (const Json::parse_error& e) {
    throw DatasetError(Kind::invalid_value, "<record>", "<unknown>",
                       std::string("malformed record: ") + e.what());
  }
  return parse_instance(record);
}

Json serialize_instance(const VqaInstance& inst) {
  Json j;
  j["id"] = inst.id;
  j["question_en"] = inst.question_en;
  j["question_zh"] = inst.question_zh;
  j["image_url"] = inst.image.locator;
  if (inst.image.content_hash) j["image_hash"] = *inst.image.content_hash;
  j["answers"] = inst.answers;
  j["domain"] = inst.domain;
  j["answer_update_frequency"] = std::string(to_string(inst.update_freq));
  j["reasoning_steps"] = std::string(to_string(inst.hops));
  j["needs_external_visual"] = inst.needs_external_visual ? "yes" : "no";
  j["golden_query"] = inst.golden_query;
  j["last_verified"] = format_date(inst.last_verified);
  if (inst.monolingual) j["monolingual"] = "yes";
  return j;
}

std::string FileImageResolver::fetch(const std::string& locator) {
  std::string path = locator;
  if (path.rfind("file://", 0) == 0) path = path.substr(7);
  return read_file(path);
}

ImageRef resolve_image(const ImageRef& image, ImageResolver& resolver) {
  if (trim(image.locator).empty()) throw Error("image locator is empty");
  ImageRef out = image;
  out.content_hash = sha256_hex(resolver.fetch(image.locator));
  return out;
}

Dataset::Dataset(std::vector<VqaInstance> instances) : instances_(std::move(instances)) {
  index_.reserve(instances_.size());
  for (std::size_t i = 0; i < instances_.size(); ++i) {
    if (!index_.emplace(instances_[i].id, i).second) {
      throw DatasetError(Kind::duplicate_id, "id", instances_[i].id,
                         "duplicate instance id '" + instances_[i].id + "'");
    }
  }
}

const VqaInstance* Dataset::find(const std::string& id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &instances_[it->second];
}

Dataset parse_dataset(std::string_view text, const std::string& origin) {
  std::vector<VqaInstance> instances;
  std::vector<std::string> diagnostics;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    ++line_no;
    const std::string line = trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    if (line.empty()) continue;
    try {
      instances.push_back(parse_instance_line(line));
    } catch (const DatasetError& e) {
      diagnostics.push_back(origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!diagnostics.empty()) {
    DatasetError err(Kind::aggregate_parse_error, "", "",
                     origin + ": " + std::to_string(diagnostics.size()) +
                         " record(s) failed to parse; first: " + diagnostics.front());
    err.set_diagnostics(std::move(diagnostics));
    throw err;
  }
  return Dataset(std::move(instances));
}

Dataset load_dataset(const std::filesystem::path& path) {
  return parse_dataset(read_file(path), path.string());
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  std::vector<Json> records;
  records.reserve(dataset.size());
  for (const auto& inst : dataset) records.push_back(serialize_instance(inst));
  write_line_records(path, records);
}

double StatsReport::percent(std::size_t count) const {
  if (total == 0) return 0.0;
  return std::round(1000.0 * static_cast<double>(count) / static_cast<double>(total)) / 10.0;
}

namespace {

Json length_json(const LengthStats& s) {
  return Json{{"mean", s.mean}, {"max", s.max}, {"count", s.count}};
}

void add_length(LengthStats& s, std::size_t len, double& sum) {
  sum += static_cast<double>(len);
  s.max = std::max(s.max, len);
  ++s.count;
}

}  // namespace

Json StatsReport::to_json() const {
  Json j;
  j["total"] = total;
  j["per_domain"] = per_domain;
  for (auto f : {UpdateFreq::fast, UpdateFreq::slow, UpdateFreq::never}) {
    const auto c = per_update_freq.at(f);
    j["update_frequency"][std::string(to_string(f))] = {{"count", c}, {"percent", percent(c)}};
  }
  for (auto h : {Hops::at_most_two, Hops::more_than_two}) {
    const auto c = per_hops.at(h);
    j["reasoning_steps"][std::string(to_string(h))] = {{"count", c}, {"percent", percent(c)}};
  }
  j["needs_external_visual"]["yes"] = {{"count", visual_yes}, {"percent", percent(visual_yes)}};
  j["needs_external_visual"]["no"] = {{"count", visual_no}, {"percent", percent(visual_no)}};
  j["cross"]["fast_and_>2-hop"] = {{"count", fast_and_multi_hop}, {"percent", percent(fast_and_multi_hop)}};
  j["cross"]["fast_and_visual"] = {{"count", fast_and_visual}, {"percent", percent(fast_and_visual)}};
  j["cross"][">2-hop_and_visual"] = {{"count", multi_hop_and_visual},
                                     {"percent", percent(multi_hop_and_visual)}};
  j["questions"]["en"] = questions_en;
  j["questions"]["zh"] = questions_zh;
  for (auto lang : {Language::en, Language::zh}) {
    const std::string l(to_string(lang));
    j["question_length"][l] = length_json(question_length.at(lang));
    j["answer_length"][l] = length_json(answer_length.at(lang));
  }
  return j;
}

std::string StatsReport::to_table() const {
  std::ostringstream out;
  auto row = [&](const std::string& label, std::size_t c) {
    out << std::left << std::setw(44) << label << std::right << std::setw(6) << c << " ("
        << std::fixed << std::setprecision(1) << percent(c) << "%)\n";
  };
  out << std::left << std::setw(44) << "Total questions" << std::right << std::setw(6) << total
      << "\n";
  out << std::left << std::setw(44) << "Domains" << std::right << std::setw(6) << per_domain.size()
      << "\n";
  row("English questions", questions_en);
  row("Chinese questions", questions_zh);
  row("Fast updating answers", per_update_freq.at(UpdateFreq::fast));
  row("  && >2-hop reasoning", fast_and_multi_hop);
  row("  && external visual knowledge", fast_and_visual);
  row("Slow updating answers", per_update_freq.at(UpdateFreq::slow));
  row("Never updating answers", per_update_freq.at(UpdateFreq::never));
  row(">2-hop reasoning", per_hops.at(Hops::more_than_two));
  row("  && external visual knowledge", multi_hop_and_visual);
  row("<=2-hop reasoning", per_hops.at(Hops::at_most_two));
  row("External visual knowledge", visual_yes);
  row("No external visual knowledge", visual_no);
  for (auto lang : {Language::en, Language::zh}) {
    const auto& q = question_length.at(lang);
    const auto& a = answer_length.at(lang);
    out << "Question length (" << to_string(lang) << "): mean " << std::fixed
        << std::setprecision(1) << q.mean << ", max " << q.max << "\n";
    out << "Answer length (" << to_string(lang) << "): mean " << std::fixed << std::setprecision(1)
        << a.mean << ", max " << a.max << "\n";
  }
  return out.str();
}

StatsReport compute_stats(const Dataset& dataset) {
  StatsReport r;
  r.total = dataset.size();
  for (auto f : {UpdateFreq::fast, UpdateFreq::slow, UpdateFreq::never}) r.per_update_freq[f] = 0;
  for (auto h : {Hops::at_most_two, Hops::more_than_two}) r.per_hops[h] = 0;
  std::map<Language, double> q_sum{{Language::en, 0.0}, {Language::zh, 0.0}};
  std::map<Language, double> a_sum{{Language::en, 0.0}, {Language::zh, 0.0}};
  for (auto lang : {Language::en, Language::zh}) {
    r.question_length[lang] = {};
    r.answer_length[lang] = {};
  }

  for (const auto& inst : dataset) {
    ++r.per_domain[inst.domain];
    ++r.per_update_freq[inst.update_freq];
    ++r.per_hops[inst.hops];
    (inst.needs_external_visual ? r.visual_yes : r.visual_no) += 1;
    const bool fast = inst.update_freq == UpdateFreq::fast;
    const bool multi = inst.hops == Hops::more_than_two;
    if (fast && multi) ++r.fast_and_multi_hop;
    if (fast && inst.needs_external_visual) ++r.fast_and_visual;
    if (multi && inst.needs_external_visual) ++r.multi_hop_and_visual;
    for (auto lang : {Language::en, Language::zh}) {
      if (!inst.has_question(lang)) continue;
      (lang == Language::en ? r.questions_en : r.questions_zh) += 1;
      add_length(r.question_length[lang], segment(inst.question(lang), policy_for(lang)).size(),
                 q_sum[lang]);
    }
    for (const auto& a : inst.answers) {
      const Language lang = contains_han(a) ? Language::zh : Language::en;
      add_length(r.answer_length[lang], segment(a, policy_for(lang)).size(), a_sum[lang]);
    }
  }
  for (auto lang : {Language::en, Language::zh}) {
    auto& q = r.question_length[lang];
    auto& a = r.answer_length[lang];
    q.mean = q.count ? q_sum[lang] / static_cast<double>(q.count) : 0.0;
    a.mean = a.count ? a_sum[lang] / static_cast<double>(a.count) : 0.0;
  }
  return r;
}

std::string diversity_text(const VqaInstance& instance, DiversityField field) {
  if (field == DiversityField::answer) return instance.answers.front();
  return instance.question_en.empty() ? instance.question_zh : instance.question_en;
}

double diversity(const Dataset& dataset, const Embedder& embedder, DiversityField field,
                 int threads) {
  if (dataset.size() < 2) {
    throw DatasetError(Kind::too_few_instances, "", "",
                       "diversity needs at least two instances, got " +
                           std::to_string(dataset.size()));
  }
  std::vector<std::vector<double>> vectors;
  vectors.reserve(dataset.size());
  for (const auto& inst : dataset) vectors.push_back(embedder(diversity_text(inst, field)));
  return kernels::mean_pairwise_cosine_distance(vectors, threads);
}

TermFrequencyEmbedder::TermFrequencyEmbedder(const std::vector<std::string>& corpus) {
  for (const auto& text : corpus) {
    for (auto& tok : segment(text)) vocabulary_.emplace(std::move(tok), 0);
  }
  std::size_t i = 0;
  for (auto& [tok, idx] : vocabulary_) idx = i++;
}

std::vector<double> TermFrequencyEmbedder::operator()(std::string_view text) const {
  std::vector<double> v(vocabulary_.size(), 0.0);
  for (const auto& tok : segment(text)) {
    auto it = vocabulary_.find(tok);
    if (it != vocabulary_.end()) v[it->second] += 1.0;
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  if (norm > 0.0) {
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
  }
  return v;
}

}  // namespace mrag
