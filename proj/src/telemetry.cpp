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

#include "mrag/telemetry.hpp"

#include <algorithm>
#include <iomanip>
#include <set>
#include <sstream>

namespace mrag {

PriceTable PriceTable::defaults() {
  PriceTable t;
  const ModelPrice gpt4v{10.0 / 1e6, 30.0 / 1e6, "USD"};
  for (const char* m : {"gpt-4v", "sim-mllm", "sim-captioner", "sim-judge"}) t.set(m, gpt4v);
  return t;
}

PriceTable PriceTable::from_json(const Json& j) {
  PriceTable t;
  const Json& models = j.contains("models") ? j.at("models") : j;
  for (const auto& m : models) {
    ModelPrice p;
    p.input_price = m.at("input_price").get<double>();
    p.output_price = m.at("output_price").get<double>();
    p.currency = m.value("currency", "USD");
    t.set(m.at("model_id").get<std::string>(), p);
  }
  return t;
}

PriceTable PriceTable::load(const std::filesystem::path& path) { return from_json(Json::parse(read_file(path))); }

Json PriceTable::to_json() const {
  Json models = Json::array();
  for (const auto& [id, p] : prices_) {
    models.push_back(
        {{"model_id", id}, {"input_price", p.input_price}, {"output_price", p.output_price}, {"currency", p.currency}});
  }
  return Json{{"models", std::move(models)}};
}

void PriceTable::set(const std::string& model_id, ModelPrice price) {
  if (price.input_price < 0 || price.output_price < 0) {
    throw Error("negative price for model '" + model_id + "'");
  }
  prices_[model_id] = std::move(price);
}

const ModelPrice& PriceTable::at(const std::string& model_id) const {
  auto it = prices_.find(model_id);
  if (it == prices_.end()) throw UnknownModel("no price configured for model '" + model_id + "'");
  return it->second;
}

double expense(double input_tokens, double output_tokens, const ModelPrice& price) {
  return input_tokens * price.input_price + output_tokens * price.output_price;
}

double expense(const TokenUsage& usage, const std::string& model_id, const PriceTable& prices) {
  return expense(static_cast<double>(usage.input_tokens), static_cast<double>(usage.output_tokens),
                 prices.at(model_id));
}

double CostRow::search_percent() const {
  return mean_total_ms > 0.0 ? 100.0 * mean_search_ms / mean_total_ms : 0.0;
}

CostReport cost_report(const std::vector<AgentTrace>& traces, const PriceTable& prices) {
  std::map<std::string, std::vector<const AgentTrace*>> by_method;
  for (const auto& t : traces) by_method[t.method].push_back(&t);

  CostReport report;
  for (auto& [method, group] : by_method) {
    // Fixed summation order keeps the means independent of input order.
    std::sort(group.begin(), group.end(),
              [](const AgentTrace* a, const AgentTrace* b) { return a->session_id < b->session_id; });
    CostRow row;
    row.method = method;
    row.sessions = group.size();
    const double n = static_cast<double>(group.size());

    std::map<std::string, TokenUsage> per_model;
    std::set<std::string> models;
    double search = 0.0, inference = 0.0;
    for (const AgentTrace* t : group) {
      for (const auto& s : t->steps) {
        for (const auto& c : s.calls) {
          per_model[c.model_id] += c.usage;
          models.insert(c.model_id);
        }
      }
      search += t->search_ms();
      inference += t->inference_ms();
    }
    for (const auto& m : models) {
      const TokenUsage& u = per_model[m];
      ModelCost mc;
      mc.model_id = m;
      mc.mean_input_tokens = static_cast<double>(u.input_tokens) / n;
      mc.mean_output_tokens = static_cast<double>(u.output_tokens) / n;
      mc.mean_expense = expense(mc.mean_input_tokens, mc.mean_output_tokens, prices.at(m));
      row.mean_expense += mc.mean_expense;
      row.models.push_back(std::move(mc));
    }
    row.mean_search_ms = search / n;
    row.mean_inference_ms = inference / n;
    row.mean_total_ms = row.mean_search_ms + row.mean_inference_ms;
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::vector<Json> CostReport::to_records() const {
  std::vector<Json> out;
  for (const auto& r : rows) {
    Json models = Json::array();
    for (const auto& m : r.models) {
      models.push_back({{"model_id", m.model_id},
                        {"mean_input_tokens", m.mean_input_tokens},
                        {"mean_output_tokens", m.mean_output_tokens},
                        {"mean_expense", m.mean_expense}});
    }
    out.push_back(Json{{"method", r.method},
                       {"sessions", r.sessions},
                       {"models", std::move(models)},
                       {"mean_expense", r.mean_expense},
                       {"mean_search_ms", r.mean_search_ms},
                       {"mean_inference_ms", r.mean_inference_ms},
                       {"mean_total_ms", r.mean_total_ms},
                       {"search_percent", r.search_percent()}});
  }
  return out;
}

std::string CostReport::to_table() const {
  std::ostringstream os;
  os << std::fixed;
  os << std::left << std::setw(28) << "method" << std::setw(16) << "model" << std::right << std::setw(12)
     << "in tokens" << std::setw(12) << "out tokens" << std::setw(14) << "expense e-3" << std::setw(10)
     << "search s" << std::setw(12) << "inference s" << std::setw(10) << "total s" << std::setw(10)
     << "search %" << "\n";
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < std::max<std::size_t>(1, r.models.size()); ++i) {
      const bool first = i == 0;
      os << std::left << std::setw(28) << (first ? r.method : "");
      if (i < r.models.size()) {
        const auto& m = r.models[i];
        os << std::setw(16) << m.model_id << std::right << std::setprecision(1) << std::setw(12)
           << m.mean_input_tokens << std::setw(12) << m.mean_output_tokens;
      } else {
        os << std::setw(16) << "-" << std::right << std::setw(12) << "-" << std::setw(12) << "-";
      }
      if (first) {
        os << std::setprecision(1) << std::setw(14) << r.mean_expense * 1e3 << std::setprecision(2)
           << std::setw(10) << r.mean_search_ms / 1e3 << std::setw(12) << r.mean_inference_ms / 1e3
           << std::setw(10) << r.mean_total_ms / 1e3 << std::setprecision(1) << std::setw(10)
           << r.search_percent();
      }
      os << "\n";
    }
  }
  return os.str();
}

void TraceSink::append(AgentTrace trace) {
  std::lock_guard lock(mutex_);
  traces_.push_back(std::move(trace));
}

std::vector<AgentTrace> TraceSink::snapshot() const {
  std::lock_guard lock(mutex_);
  return traces_;
}

}  // namespace mrag
