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
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mrag/common.hpp"

namespace mrag {

enum class UpdateFreq { fast, slow, never };
enum class Hops { at_most_two, more_than_two };

std::string_view to_string(UpdateFreq f);
std::string_view to_string(Hops h);

/// The nine domain labels used by the dataset.
const std::array<std::string_view, 9>& domain_labels();

class DatasetError : public Error {
 public:
  enum class Kind {
    missing_field,
    bad_enum_value,
    empty_answer_list,
    invalid_value,
    duplicate_id,
    aggregate_parse_error,
    too_few_instances,
  };

  DatasetError(Kind kind, std::string field, std::string record_id, const std::string& what)
      : Error(what), kind_(kind), field_(std::move(field)), record_id_(std::move(record_id)) {}

  Kind kind() const { return kind_; }
  const std::string& field() const { return field_; }
  const std::string& record_id() const { return record_id_; }
  /// Per-record diagnostics for aggregate_parse_error.
  const std::vector<std::string>& diagnostics() const { return diagnostics_; }
  void set_diagnostics(std::vector<std::string> d) { diagnostics_ = std::move(d); }

 private:
  Kind kind_;
  std::string field_;
  std::string record_id_;
  std::vector<std::string> diagnostics_;
};

struct ImageRef {
  std::string locator;
  std::optional<std::string> content_hash;

  bool operator==(const ImageRef&) const = default;
};

/// Fetches image bytes for a locator. Implementations must be thread-safe.
class ImageResolver {
 public:
  virtual ~ImageResolver() = default;
  /// Throws mrag::Error when the locator cannot be fetched.
  virtual std::string fetch(const std::string& locator) = 0;
};

/// Reads local paths (optionally `file://` prefixed).
class FileImageResolver : public ImageResolver {
 public:
  std::string fetch(const std::string& locator) override;
};

/// Returns `image` with content_hash filled from the fetched bytes.
ImageRef resolve_image(const ImageRef& image, ImageResolver& resolver);

struct VqaInstance {
  std::string id;
  std::string question_en;
  std::string question_zh;
  ImageRef image;
  std::vector<std::string> answers;
  std::string domain;
  UpdateFreq update_freq = UpdateFreq::never;
  Hops hops = Hops::at_most_two;
  bool needs_external_visual = false;
  std::string golden_query;
  std::chrono::year_month_day last_verified{};
  bool monolingual = false;

  bool operator==(const VqaInstance&) const = default;

  /// Question text in `lang`; falls back to the other language for
  /// monolingual records.
  const std::string& question(Language lang) const;
  bool has_question(Language lang) const;
};

/// Validates and maps one dataset record. Accepts canonical enum spellings
/// and the table spellings as aliases.
VqaInstance parse_instance(const Json& record);
VqaInstance parse_instance_line(std::string_view line);
Json serialize_instance(const VqaInstance& instance);

std::string format_date(const std::chrono::year_month_day& d);
std::chrono::year_month_day parse_date(std::string_view s);

/// Immutable collection of instances with unique ids.
class Dataset {
 public:
  Dataset() = default;
  /// Throws DatasetError(duplicate_id).
  explicit Dataset(std::vector<VqaInstance> instances);

  std::size_t size() const { return instances_.size(); }
  bool empty() const { return instances_.empty(); }
  const std::vector<VqaInstance>& instances() const { return instances_; }
  const VqaInstance& operator[](std::size_t i) const { return instances_[i]; }
  const VqaInstance* find(const std::string& id) const;

  auto begin() const { return instances_.begin(); }
  auto end() const { return instances_.end(); }

 private:
  std::vector<VqaInstance> instances_;
  std::unordered_map<std::string, std::size_t> index_;
};

Dataset parse_dataset(std::string_view text, const std::string& origin);
Dataset load_dataset(const std::filesystem::path& path);
void save_dataset(const std::filesystem::path& path, const Dataset& dataset);

struct LengthStats {
  double mean = 0.0;
  std::size_t max = 0;
  std::size_t count = 0;
};

struct StatsReport {
  std::size_t total = 0;
  std::map<std::string, std::size_t> per_domain;
  std::map<UpdateFreq, std::size_t> per_update_freq;
  std::map<Hops, std::size_t> per_hops;
  std::size_t visual_yes = 0;
  std::size_t visual_no = 0;
  std::size_t fast_and_multi_hop = 0;
  std::size_t fast_and_visual = 0;
  std::size_t multi_hop_and_visual = 0;
  std::size_t questions_en = 0;
  std::size_t questions_zh = 0;
  std::map<Language, LengthStats> question_length;
  std::map<Language, LengthStats> answer_length;

  /// Percentage of total rounded to one decimal; 0 for an empty dataset.
  double percent(std::size_t count) const;
  Json to_json() const;
  std::string to_table() const;
};

StatsReport compute_stats(const Dataset& dataset);

using Embedder = std::function<std::vector<double>(std::string_view)>;

enum class DiversityField { question, answer };

/// Mean over unordered pairs of (1 - dot(u, v)). Throws
/// DatasetError(too_few_instances) for fewer than two instances.
double diversity(const Dataset& dataset, const Embedder& embedder, DiversityField field,
                 int threads = 0);

/// Text used by diversity(): the English question (Chinese when empty) or
/// the first answer.
std::string diversity_text(const VqaInstance& instance, DiversityField field);

/// L2-normalized term-frequency vectors over a vocabulary fitted on a corpus.
/// Texts whose tokens are all out of vocabulary embed to the zero vector.
class TermFrequencyEmbedder {
 public:
  explicit TermFrequencyEmbedder(const std::vector<std::string>& corpus);
  std::vector<double> operator()(std::string_view text) const;
  std::size_t dimension() const { return vocabulary_.size(); }

 private:
  std::map<std::string, std::size_t> vocabulary_;
};

}  // namespace mrag
