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
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mrag/agent.hpp"
#include "mrag/baselines.hpp"
#include "mrag/evaluation.hpp"
#include "mrag/http_backends.hpp"
#include "mrag/sim_models.hpp"
#include "mrag/simworld.hpp"
#include "mrag/telemetry.hpp"

namespace mrag {

inline constexpr const char* kOmniSearchMethod = "omnisearch";

class ManifestError : public Error {
 public:
  using Error::Error;
};

/// Generated benchmark source: a seeded world plus a category mix.
struct SimWorldSpec {
  std::uint64_t seed = 42;
  sim::WorldConfig config;
  sim::BenchmarkMix mix = sim::BenchmarkMix::table2();
  int n = 200;
  /// Questions are generated at day 0; when set, the world is advanced to
  /// this day before running and the answers are re-evaluated there.
  std::optional<int> advance_to;
};

/// How a model id or the search service is reached.
struct BackendBinding {
  std::string kind = "sim";  // sim | http
  std::optional<HttpEndpoint> endpoint;
  ImageTransport image_transport = ImageTransport::url;
};

struct ExperimentManifest {
  std::optional<std::filesystem::path> dataset_path;
  std::optional<SimWorldSpec> simworld;
  std::vector<std::string> methods;
  std::string planner = "scripted";  // scripted | model
  std::string planner_model = sim::kSimReaderModel;
  SolverMode solver_mode = SolverMode::passthrough;
  std::string solver_model = sim::kSimReaderModel;
  std::optional<std::string> solver_text_model;
  std::string answer_model = sim::kSimReaderModel;
  std::string caption_model = sim::kSimCaptionerModel;
  std::string judge_model = sim::kSimJudgeModel;
  std::map<std::string, BackendBinding> models;
  BackendBinding search;
  int k = kDefaultTopK;
  ContentParts parts;
  int max_steps = 6;
  double threshold = kDefaultCorrectThreshold;
  std::vector<Language> languages{Language::en, Language::zh};
  /// Path to a price table file; the default table when empty.
  std::optional<std::filesystem::path> prices;
  std::filesystem::path output_dir = "runs/default";
  std::uint64_t seed = 0;
  std::size_t evidence_budget = 4000;
  int threads = 1;
  bool cache = false;

  Json to_json() const;
  /// Unknown keys are rejected so no setting is silently ignored.
  static ExperimentManifest from_json(const Json& j);
  static ExperimentManifest load(const std::filesystem::path& path);
  /// Throws ManifestError when a method's ports are not bound.
  void validate() const;

  /// All six fixed pipelines plus OmniSearch on the default sim world.
  static ExperimentManifest sim_default();
};

/// One answer of one method on one question.
struct Prediction {
  std::string instance_id;
  std::string method;
  Language lang = Language::en;
  std::string prediction;
  std::string trace_ref;  // traces/<method>.jsonl#<session_id>

  Json to_json() const;
  static Prediction from_json(const Json& j);
};

/// Live wiring of a manifest: dataset, world, gateway and toolbox.
class ExperimentContext {
 public:
  /// Relative paths in the manifest resolve against `base_dir`.
  explicit ExperimentContext(ExperimentManifest manifest,
                             const std::filesystem::path& base_dir = ".");

  const ExperimentManifest& manifest() const { return manifest_; }
  const Dataset& dataset() const { return dataset_; }
  std::shared_ptr<const sim::World> world() const { return world_; }
  const std::optional<sim::Benchmark>& benchmark() const { return benchmark_; }
  Gateway& gateway() { return *gateway_; }
  Toolbox& toolbox() { return *toolbox_; }
  const PriceTable& prices() const { return prices_; }

  /// Runs one method on one question and returns the trace.
  AgentTrace run_one(const std::string& method, const VqaInstance& instance, Language lang);

  /// Used by the CLI to silence backoff sleeps in tests.
  void set_sleeper(Sleeper sleeper);

 private:
  std::unique_ptr<Planner> make_planner();

  ExperimentManifest manifest_;
  Dataset dataset_;
  std::shared_ptr<const sim::World> world_;
  std::optional<sim::Benchmark> benchmark_;
  std::shared_ptr<Gateway> gateway_;
  std::shared_ptr<Toolbox> toolbox_;
  PriceTable prices_;
};

struct RunResult {
  std::vector<Prediction> predictions;
  std::vector<AgentTrace> traces;  // same order as predictions
};

/// Every (method, instance, language) session, ordered by method, then
/// dataset order, then language.
RunResult run_all(ExperimentContext& context);

/// Runs the manifest and writes the run directory: manifest.json,
/// prompt_hashes.json, dataset.jsonl, predictions.jsonl, traces/<method>.jsonl,
/// plus world_manifest.json and plans.jsonl for sim runs.
RunResult run_experiment(const ExperimentManifest& manifest,
                         const std::filesystem::path& base_dir = ".");

struct ScoreResult {
  std::vector<EvalScore> scores;
  std::vector<std::pair<std::string, CategoryReport>> reports;  // manifest method order
};

ScoreResult score_predictions(const Dataset& dataset, const std::vector<Prediction>& predictions,
                              double threshold = kDefaultCorrectThreshold);

/// Re-scores a run directory from its files alone; writes scores.jsonl,
/// category_report.json and category_table.txt.
ScoreResult score_run(const std::filesystem::path& run_dir);

struct ReportOptions {
  bool judge = false;
};

struct RunReport {
  CostReport cost;
  OverlapMatrix overlap;
  std::optional<Json> judge;  // per-method accuracy plus Pearson against F1-Recall
};

/// Cost, overlap and optional judge tables for a scored run; writes
/// cost_report.jsonl, cost_table.txt, overlap.json, overlap_table.txt and
/// judge.json.
RunReport report_run(const std::filesystem::path& run_dir, const ReportOptions& options = {});

std::vector<Prediction> read_predictions(const std::filesystem::path& path);
std::vector<AgentTrace> read_traces(const std::filesystem::path& run_dir,
                                    const std::vector<std::string>& methods);

}  // namespace mrag
