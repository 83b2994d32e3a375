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

#include "mrag/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <unordered_set>

#include "mrag/gateway.hpp"
#include "mrag/prompts.hpp"

namespace mrag {

double f1_recall(std::string_view prediction, std::span<const std::string> gold,
                 const SegmenterPolicy& policy, MetricReading reading) {
  if (gold.empty()) throw EvalError(EvalError::Kind::empty_gold, "gold answer list is empty");
  const auto pred_tokens = segment(prediction, policy);
  const std::unordered_set<std::string> pred(pred_tokens.begin(), pred_tokens.end());
  double best = 0.0;
  for (const auto& g : gold) {
    const auto gold_tokens = segment(g, policy);
    const std::unordered_set<std::string> gset(gold_tokens.begin(), gold_tokens.end());
    if (gset.empty()) {
      throw EvalError(EvalError::Kind::empty_gold,
                      "gold answer '" + g + "' has no tokens after normalization");
    }
    std::size_t common = 0;
    for (const auto& t : gset) common += pred.count(t);
    double score = 0.0;
    if (reading == MetricReading::recall_over_gold) {
      score = static_cast<double>(common) / static_cast<double>(gset.size());
    } else if (!pred.empty()) {
      score = static_cast<double>(common) / static_cast<double>(pred.size());
    }
    best = std::max(best, score);
  }
  return best;
}

Json EvalScore::to_json() const {
  return Json{{"instance_id", instance_id}, {"method", method},   {"lang", std::string(to_string(lang))},
              {"f1_recall", f1_recall},     {"correct", correct}};
}

EvalScore EvalScore::from_json(const Json& j) {
  EvalScore s;
  s.instance_id = j.at("instance_id").get<std::string>();
  s.method = j.at("method").get<std::string>();
  s.lang = language_from_string(j.at("lang").get<std::string>());
  s.f1_recall = j.at("f1_recall").get<double>();
  s.correct = j.at("correct").get<bool>();
  return s;
}

EvalScore make_score(std::string instance_id, std::string method, Language lang, double value,
                     double threshold) {
  return EvalScore{std::move(instance_id), std::move(method), lang, value, value >= threshold};
}

const std::vector<std::string>& category_columns() {
  static const std::vector<std::string> cols = {"fast",      "slow",       "never", "<=2-hop",
                                                ">2-hop",    "visual:no",  "visual:yes",
                                                "zh",        "en",         "all"};
  return cols;
}

namespace {

struct Accumulator {
  std::size_t count = 0;
  double sum = 0.0;
  void add(double v) {
    ++count;
    sum += v;
  }
  CellStat stat() const {
    CellStat s;
    s.count = count;
    if (count > 0) s.mean = sum / static_cast<double>(count);
    return s;
  }
};

Json cell_json(const CellStat& c) {
  Json j{{"count", c.count}};
  j["mean"] = c.mean ? Json(*c.mean) : Json(nullptr);
  return j;
}

std::string format_cell(const std::optional<double>& v) {
  if (!v) return "-";
  std::ostringstream out;
  out << std::fixed << std::setprecision(2) << *v;
  return out.str();
}

}  // namespace

Json CategoryReport::to_json() const {
  Json j;
  for (const auto& [k, c] : cells) j["cells"][k] = cell_json(c);
  j["domains"] = Json::object();
  for (const auto& [k, c] : domains) j["domains"][k] = cell_json(c);
  return j;
}

CategoryReport aggregate(std::span<const EvalScore> scores, const Dataset& dataset) {
  std::map<std::string, Accumulator> cells;
  std::map<std::string, Accumulator> domains;
  for (const auto& col : category_columns()) cells[col] = {};
  for (const auto& s : scores) {
    const VqaInstance* inst = dataset.find(s.instance_id);
    if (!inst) {
      throw EvalError(EvalError::Kind::missing_instance,
                      "score refers to unknown instance '" + s.instance_id + "'");
    }
    const double v = s.f1_recall;
    cells[std::string(to_string(inst->update_freq))].add(v);
    cells[std::string(to_string(inst->hops))].add(v);
    cells[inst->needs_external_visual ? "visual:yes" : "visual:no"].add(v);
    cells[std::string(to_string(s.lang))].add(v);
    cells["all"].add(v);
    domains[inst->domain].add(v);
  }
  CategoryReport r;
  for (const auto& [k, acc] : cells) r.cells[k] = acc.stat();
  for (const auto& [k, acc] : domains) r.domains[k] = acc.stat();
  return r;
}

std::string format_category_table(
    const std::vector<std::pair<std::string, CategoryReport>>& rows) {
  static const std::vector<std::string> headers = {"fast", "slow", "never", "<=2-hop", ">2-hop",
                                                   "no",   "yes",  "zh",    "en",      "all"};
  std::size_t name_width = 8;
  for (const auto& [name, _] : rows) name_width = std::max(name_width, name.size() + 2);
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(name_width)) << "method";
  for (const auto& h : headers) out << std::right << std::setw(9) << h;
  out << "\n";
  for (const auto& [name, report] : rows) {
    out << std::left << std::setw(static_cast<int>(name_width)) << name;
    for (const auto& col : category_columns()) {
      const auto& cell = report.cells.at(col);
      std::optional<double> pct;
      if (cell.mean) pct = *cell.mean * 100.0;
      out << std::right << std::setw(9) << format_cell(pct);
    }
    out << "\n";
  }
  return out.str();
}

OverlapMatrix overlap_matrix(const std::map<std::string, std::set<std::string>>& correct_sets,
                             double threshold) {
  if (correct_sets.size() < 2) {
    throw EvalError(EvalError::Kind::bad_input, "overlap matrix needs at least two methods");
  }
  OverlapMatrix m;
  m.threshold = threshold;
  std::vector<const std::set<std::string>*> sets;
  for (const auto& [name, set] : correct_sets) {
    m.methods.push_back(name);
    sets.push_back(&set);
  }
  const std::size_t n = sets.size();
  m.percent.assign(n, std::vector<std::optional<double>>(n));
  for (std::size_t i = 0; i < n; ++i) {
    if (sets[i]->empty()) continue;
    for (std::size_t j = 0; j < n; ++j) {
      std::size_t common = 0;
      for (const auto& id : *sets[i]) common += sets[j]->count(id);
      m.percent[i][j] = 100.0 * static_cast<double>(common) / static_cast<double>(sets[i]->size());
    }
  }
  return m;
}

std::string OverlapMatrix::to_table() const {
  std::size_t w = 8;
  for (const auto& name : methods) w = std::max(w, name.size() + 2);
  std::ostringstream out;
  out << "correctness threshold: F1-Recall >= " << std::fixed << std::setprecision(2) << threshold
      << "\n";
  out << std::left << std::setw(static_cast<int>(w)) << "";
  for (const auto& name : methods) out << std::right << std::setw(static_cast<int>(w)) << name;
  out << "\n";
  for (std::size_t i = 0; i < methods.size(); ++i) {
    out << std::left << std::setw(static_cast<int>(w)) << methods[i];
    for (std::size_t j = 0; j < methods.size(); ++j) {
      out << std::right << std::setw(static_cast<int>(w)) << format_cell(percent[i][j]);
    }
    out << "\n";
  }
  return out.str();
}

Json OverlapMatrix::to_json() const {
  Json j;
  j["methods"] = methods;
  j["threshold"] = threshold;
  Json rows = Json::array();
  for (const auto& row : percent) {
    Json r = Json::array();
    for (const auto& v : row) r.push_back(v ? Json(*v) : Json(nullptr));
    rows.push_back(std::move(r));
  }
  j["percent"] = std::move(rows);
  return j;
}

double fleiss_kappa(const std::vector<std::vector<int>>& ratings) {
  using K = EvalError::Kind;
  if (ratings.size() < 2) throw EvalError(K::bad_input, "fleiss_kappa needs at least two items");
  const std::size_t categories = ratings.front().size();
  if (categories == 0) throw EvalError(K::bad_input, "fleiss_kappa needs at least one category");
  long raters = -1;
  for (std::size_t i = 0; i < ratings.size(); ++i) {
    const auto& row = ratings[i];
    if (row.size() != categories) {
      throw EvalError(K::bad_input, "item " + std::to_string(i) + " has a different category count");
    }
    long sum = 0;
    for (int c : row) {
      if (c < 0) throw EvalError(K::bad_input, "negative rating count in item " + std::to_string(i));
      sum += c;
    }
    if (raters < 0) raters = sum;
    if (sum != raters) {
      throw EvalError(K::inconsistent_rater_count,
                      "item " + std::to_string(i) + " has " + std::to_string(sum) +
                          " ratings, expected " + std::to_string(raters));
    }
  }
  if (raters < 2) throw EvalError(K::bad_input, "fleiss_kappa needs at least two raters");

  const double n = static_cast<double>(raters);
  const double items = static_cast<double>(ratings.size());
  std::vector<double> column_totals(categories, 0.0);
  double agreement_sum = 0.0;
  for (const auto& row : ratings) {
    double sq = 0.0;
    for (std::size_t j = 0; j < categories; ++j) {
      sq += static_cast<double>(row[j]) * row[j];
      column_totals[j] += row[j];
    }
    agreement_sum += (sq - n) / (n * (n - 1.0));
  }
  const double p_bar = agreement_sum / items;
  double p_e = 0.0;
  for (double t : column_totals) {
    const double p = t / (items * n);
    p_e += p * p;
  }
  if (p_e >= 1.0) {
    if (p_bar >= 1.0) return 1.0;
    throw EvalError(K::degenerate_marginals, "expected agreement is 1 but observed agreement is not");
  }
  return (p_bar - p_e) / (1.0 - p_e);
}

double pearson(std::span<const double> x, std::span<const double> y) {
  using K = EvalError::Kind;
  if (x.size() != y.size()) throw EvalError(K::bad_input, "pearson: series lengths differ");
  if (x.size() < 2) throw EvalError(K::bad_input, "pearson: need at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw EvalError(K::constant_series, "pearson: constant series");
  const double r = sxy / std::sqrt(sxx * syy);
  return std::clamp(r, -1.0, 1.0);
}

std::optional<bool> parse_accuracy_verdict(std::string_view reply) {
  std::string last;
  std::istringstream in{std::string(reply)};
  for (std::string line; std::getline(in, line);) {
    auto t = trim(line);
    if (!t.empty()) last = t;
  }
  while (!last.empty() && (last.back() == '.' || last.back() == '*')) last.pop_back();
  while (!last.empty() && last.front() == '*') last.erase(0, 1);
  std::string lower = to_lower_ascii(trim(last));
  if (lower.rfind("verdict:", 0) == 0) lower = trim(lower.substr(8));
  if (lower == "correct") return true;
  if (lower == "incorrect") return false;
  return std::nullopt;
}

JudgeResult judge_accuracy(const std::vector<JudgeItem>& items, Gateway& judge,
                           const std::string& judge_model, int threads) {
  JudgeResult result;
  std::vector<char> verdicts(items.size(), 0);
  std::vector<char> flagged(items.size(), 0);
  const std::string& tmpl = prompts::get(prompts::kAccuracyJudge);
  parallel_for(items.size(), threads, [&](std::size_t i) {
    const auto& item = items[i];
    std::string gold;
    for (const auto& g : item.gold) gold += "- " + g + "\n";
    if (!gold.empty()) gold.pop_back();
    const std::string prompt = render_template(
        tmpl, {{"question", item.question}, {"gold", gold}, {"prediction", item.prediction}});
    const auto reply = judge.chat(judge_model, {ChatMessage::user_text(prompt)});
    const auto verdict = parse_accuracy_verdict(reply.text);
    if (verdict) {
      verdicts[i] = *verdict ? 1 : 0;
    } else {
      flagged[i] = 1;
    }
  });
  std::size_t correct = 0;
  for (std::size_t i = 0; i < items.size(); ++i) {
    result.verdicts.push_back(verdicts[i] != 0);
    if (verdicts[i]) ++correct;
    if (flagged[i]) result.flagged.push_back(items[i].id);
  }
  result.fraction =
      items.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(items.size());
  return result;
}

}  // namespace mrag
