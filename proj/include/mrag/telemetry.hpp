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

#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "mrag/agent.hpp"
#include "mrag/gateway.hpp"

namespace mrag {

class UnknownModel : public Error {
 public:
  using Error::Error;
};

/// Currency units per token.
struct ModelPrice {
  double input_price = 0.0;
  double output_price = 0.0;
  std::string currency = "USD";
};

class PriceTable {
 public:
  /// gpt-4v and the sim models at 10 / 30 per million input / output
  /// tokens. These rates reproduce the published GPT-4V expense column
  /// (e.g. 1454.0 in / 132.5 out per question -> 0.0185).
  static PriceTable defaults();
  static PriceTable from_json(const Json& j);
  static PriceTable load(const std::filesystem::path& path);
  Json to_json() const;

  void set(const std::string& model_id, ModelPrice price);
  /// Throws UnknownModel.
  const ModelPrice& at(const std::string& model_id) const;
  bool has(const std::string& model_id) const { return prices_.count(model_id) > 0; }

 private:
  std::map<std::string, ModelPrice> prices_;
};

double expense(double input_tokens, double output_tokens, const ModelPrice& price);
/// Throws UnknownModel.
double expense(const TokenUsage& usage, const std::string& model_id, const PriceTable& prices);

struct ModelCost {
  std::string model_id;
  double mean_input_tokens = 0.0;
  double mean_output_tokens = 0.0;
  double mean_expense = 0.0;
};

struct CostRow {
  std::string method;
  std::size_t sessions = 0;
  std::vector<ModelCost> models;  // sorted by model id
  double mean_expense = 0.0;
  double mean_search_ms = 0.0;
  double mean_inference_ms = 0.0;
  double mean_total_ms = 0.0;

  /// Search share of total time in percent; 0 when no time was recorded.
  double search_percent() const;
};

struct CostReport {
  std::vector<CostRow> rows;  // sorted by method

  std::vector<Json> to_records() const;
  std::string to_table() const;
};

/// Per-method means over sessions, split per backing model. Independent of
/// the order of `traces`.
CostReport cost_report(const std::vector<AgentTrace>& traces, const PriceTable& prices);

/// Serialized collector for finished traces.
class TraceSink {
 public:
  void append(AgentTrace trace);
  std::vector<AgentTrace> snapshot() const;

 private:
  mutable std::mutex mutex_;
  std::vector<AgentTrace> traces_;
};

}  // namespace mrag
