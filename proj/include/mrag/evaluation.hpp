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

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mrag/common.hpp"
#include "mrag/dataset.hpp"
#include "mrag/segment.hpp"

namespace mrag {

class Gateway;

class EvalError : public Error {
 public:
  enum class Kind {
    empty_gold,
    missing_instance,
    inconsistent_rater_count,
    degenerate_marginals,
    constant_series,
    bad_input,
  };
  EvalError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Which side of the token overlap is the denominator.
enum class MetricReading {
  recall_over_gold,          // |pred ∩ gold| / |gold|  (default)
  precision_over_prediction  // |pred ∩ gold| / |pred|
};

/// Token-set overlap score, maximized over the gold answers. Throws
/// EvalError(empty_gold) when the gold list is empty or any gold answer has
/// no tokens after normalization.
double f1_recall(std::string_view prediction, std::span<const std::string> gold,
                 const SegmenterPolicy& policy = {},
                 MetricReading reading = MetricReading::recall_over_gold);

struct EvalScore {
  std::string instance_id;
  std::string method;
  Language lang = Language::en;
  double f1_recall = 0.0;
  bool correct = false;

  Json to_json() const;
  static EvalScore from_json(const Json& j);
};

inline constexpr double kDefaultCorrectThreshold = 0.5;

EvalScore make_score(std::string instance_id, std::string method, Language lang, double value,
                     double threshold = kDefaultCorrectThreshold);

struct CellStat {
  std::size_t count = 0;
  std::optional<double> mean;  // empty cell: no scores
};

/// Cell keys, in table order.
const std::vector<std::string>& category_columns();

/// Per-cell mean F1-Recall. Columns: fast, slow, never, <=2-hop, >2-hop,
/// visual:no, visual:yes, zh, en, all; plus per-domain means.
struct CategoryReport {
  std::map<std::string, CellStat> cells;
  std::map<std::string, CellStat> domains;

  Json to_json() const;
};

CategoryReport aggregate(std::span<const EvalScore> scores, const Dataset& dataset);

/// Text table with one row per method, values scaled to percent.
std::string format_category_table(const std::vector<std::pair<std::string, CategoryReport>>& rows);

/// Row-normalized overlap of correctly answered items, in percent.
/// Entry (i, j) = 100 * |C_i ∩ C_j| / |C_i|; empty rows are undefined.
struct OverlapMatrix {
  std::vector<std::string> methods;
  std::vector<std::vector<std::optional<double>>> percent;
  double threshold = kDefaultCorrectThreshold;

  std::string to_table() const;
  Json to_json() const;
};

OverlapMatrix overlap_matrix(const std::map<std::string, std::set<std::string>>& correct_sets,
                             double threshold = kDefaultCorrectThreshold);

/// Fleiss's kappa over an items x categories count table with a fixed
/// number of raters per item.
double fleiss_kappa(const std::vector<std::vector<int>>& ratings);

/// Sample Pearson correlation.
double pearson(std::span<const double> x, std::span<const double> y);

struct JudgeItem {
  std::string id;
  std::string question;
  std::vector<std::string> gold;
  std::string prediction;
};

struct JudgeResult {
  double fraction = 0.0;
  std::vector<bool> verdicts;
  std::vector<std::string> flagged;  // ids whose verdict could not be parsed
};

/// Asks the judge model for a binary verdict per item; unparsable verdicts
/// count as incorrect and are flagged.
JudgeResult judge_accuracy(const std::vector<JudgeItem>& items, Gateway& judge,
                           const std::string& judge_model, int threads = 0);

/// Parses the final line of a judge reply into CORRECT/INCORRECT.
std::optional<bool> parse_accuracy_verdict(std::string_view reply);

}  // namespace mrag
