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

#include "mrag/experiment.hpp"

#include <algorithm>
#include <set>

#include "mrag/prompts.hpp"
#include "mrag/sim_models.hpp"

namespace mrag {

namespace fs = std::filesystem;

namespace {

bool is_sim_model(const std::string& id) {
  return id == sim::kSimReaderModel || id == sim::kSimCaptionerModel || id == sim::kSimJudgeModel;
}

bool known_method(const std::string& m) {
  return m == kOmniSearchMethod || pipeline_from_string(m).has_value();
}

Json binding_to_json(const BackendBinding& b) {
  Json j{{"kind", b.kind}, {"image_transport", std::string(to_string(b.image_transport))}};
  if (b.endpoint) j["endpoint"] = b.endpoint->to_json();
  return j;
}

BackendBinding binding_from_json(const Json& j) {
  BackendBinding b;
  b.kind = j.value("kind", "sim");
  if (b.kind != "sim" && b.kind != "http") throw ManifestError("unknown backend kind '" + b.kind + "'");
  if (j.contains("endpoint")) b.endpoint = HttpEndpoint::from_json(j.at("endpoint"));
  if (j.contains("image_transport")) {
    b.image_transport = image_transport_from_string(j.at("image_transport").get<std::string>());
  }
  return b;
}

void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ManifestError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ManifestError("unknown key '" + key + "' in " + where);
    }
  }
}

std::string solver_mode_name(SolverMode m) { return m == SolverMode::model ? "model" : "passthrough"; }

}  // namespace

// ---- Manifest ----------------------------------------------------------------

Json ExperimentManifest::to_json() const {
  Json j;
  if (dataset_path) j["dataset"] = dataset_path->generic_string();
  if (simworld) {
    Json s{{"seed", simworld->seed},
           {"config", simworld->config.to_json()},
           {"mix", simworld->mix.to_json()},
           {"n", simworld->n}};
    if (simworld->advance_to) s["advance_to"] = *simworld->advance_to;
    j["simworld"] = std::move(s);
  }
  j["methods"] = methods;
  j["planner"] = planner;
  j["planner_model"] = planner_model;
  Json solver{{"mode", solver_mode_name(solver_mode)}, {"model", solver_model}};
  if (solver_text_model) solver["text_model"] = *solver_text_model;
  j["solver"] = std::move(solver);
  j["answer_model"] = answer_model;
  j["caption_model"] = caption_model;
  j["judge_model"] = judge_model;
  Json m = Json::object();
  for (const auto& [id, b] : models) m[id] = binding_to_json(b);
  j["models"] = std::move(m);
  j["search"] = binding_to_json(search);
  j["k"] = k;
  j["parts"] = parts.to_string();
  j["max_steps"] = max_steps;
  j["threshold"] = threshold;
  Json langs = Json::array();
  for (auto l : languages) langs.push_back(std::string(to_string(l)));
  j["languages"] = std::move(langs);
  j["prices"] = prices ? Json(prices->generic_string()) : Json(nullptr);
  j["output_dir"] = output_dir.generic_string();
  j["seed"] = seed;
  j["evidence_budget"] = evidence_budget;
  j["threads"] = threads;
  j["cache"] = cache;
  return j;
}

ExperimentManifest ExperimentManifest::from_json(const Json& j) {
  check_keys(j,
             {"dataset", "simworld", "methods", "planner", "planner_model", "solver", "answer_model",
              "caption_model", "judge_model", "models", "search", "k", "parts", "max_steps",
              "threshold", "languages", "prices", "output_dir", "seed", "evidence_budget",
              "threads", "cache"},
             "manifest");
  ExperimentManifest m;
  try {
    if (j.contains("dataset") && !j["dataset"].is_null()) {
      m.dataset_path = j["dataset"].get<std::string>();
    }
    if (j.contains("simworld") && !j["simworld"].is_null()) {
      const Json& s = j["simworld"];
      check_keys(s, {"seed", "config", "mix", "n", "advance_to"}, "simworld");
      SimWorldSpec spec;
      spec.seed = s.value("seed", spec.seed);
      if (s.contains("config")) spec.config = sim::WorldConfig::from_json(s["config"]);
      if (s.contains("mix")) spec.mix = sim::BenchmarkMix::from_json(s["mix"]);
      spec.n = s.value("n", spec.n);
      if (s.contains("advance_to") && !s["advance_to"].is_null()) {
        spec.advance_to = s["advance_to"].get<int>();
      }
      m.simworld = spec;
    }
    m.methods = j.value("methods", std::vector<std::string>{});
    m.planner = j.value("planner", m.planner);
    m.planner_model = j.value("planner_model", m.planner_model);
    if (j.contains("solver")) {
      const Json& s = j["solver"];
      check_keys(s, {"mode", "model", "text_model"}, "solver");
      const std::string mode = s.value("mode", "passthrough");
      if (mode == "model") {
        m.solver_mode = SolverMode::model;
      } else if (mode != "passthrough") {
        throw ManifestError("unknown solver mode '" + mode + "'");
      }
      m.solver_model = s.value("model", m.solver_model);
      if (s.contains("text_model") && !s["text_model"].is_null()) {
        m.solver_text_model = s["text_model"].get<std::string>();
      }
    }
    m.answer_model = j.value("answer_model", m.answer_model);
    m.caption_model = j.value("caption_model", m.caption_model);
    m.judge_model = j.value("judge_model", m.judge_model);
    if (j.contains("models")) {
      for (const auto& [id, b] : j["models"].items()) m.models[id] = binding_from_json(b);
    }
    if (j.contains("search")) m.search = binding_from_json(j["search"]);
    if (j.contains("k")) {
      m.k = j["k"].is_string() ? parse_top_k(j["k"].get<std::string>()) : j["k"].get<int>();
    }
    if (j.contains("parts")) m.parts = ContentParts::parse(j["parts"].get<std::string>());
    m.max_steps = j.value("max_steps", m.max_steps);
    m.threshold = j.value("threshold", m.threshold);
    if (j.contains("languages")) {
      m.languages.clear();
      for (const auto& l : j["languages"]) m.languages.push_back(language_from_string(l.get<std::string>()));
    }
    if (j.contains("prices") && !j["prices"].is_null()) m.prices = j["prices"].get<std::string>();
    if (j.contains("output_dir")) m.output_dir = j["output_dir"].get<std::string>();
    m.seed = j.value("seed", m.seed);
    m.evidence_budget = j.value("evidence_budget", m.evidence_budget);
    m.threads = j.value("threads", m.threads);
    m.cache = j.value("cache", m.cache);
  } catch (const Json::exception& e) {
    throw ManifestError(std::string("malformed manifest: ") + e.what());
  }
  m.validate();
  return m;
}

ExperimentManifest ExperimentManifest::load(const fs::path& path) {
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const Json::exception& e) {
    throw ManifestError("manifest " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

void ExperimentManifest::validate() const {
  if (dataset_path.has_value() == simworld.has_value()) {
    throw ManifestError("manifest needs exactly one of 'dataset' and 'simworld'");
  }
  if (methods.empty()) throw ManifestError("manifest lists no methods");
  std::set<std::string> seen;
  for (const auto& m : methods) {
    if (!known_method(m)) throw ManifestError("unknown method '" + m + "'");
    if (!seen.insert(m).second) throw ManifestError("method '" + m + "' listed twice");
  }
  if (k <= 0) throw ManifestError("k must be positive");
  if (max_steps <= 0) throw ManifestError("max_steps must be positive");
  if (threshold < 0.0 || threshold > 1.0) throw ManifestError("threshold must lie in [0, 1]");
  if (languages.empty()) throw ManifestError("manifest lists no languages");
  if (threads < 0) throw ManifestError("threads must be non-negative");
  if (simworld) {
    simworld->config.validate();
    if (simworld->n <= 0) throw ManifestError("simworld.n must be positive");
    if (simworld->advance_to && *simworld->advance_to < 0) {
      throw ManifestError("simworld.advance_to must be non-negative");
    }
  }
  if (planner != "scripted" && planner != "model") {
    throw ManifestError("unknown planner '" + planner + "'");
  }

  if (search.kind == "sim" && !simworld) throw ManifestError("sim search needs a simworld dataset");
  if (search.kind == "http" && !search.endpoint) throw ManifestError("http search needs an endpoint");

  auto require_model = [&](const std::string& id, const std::string& why) {
    auto it = models.find(id);
    if (it != models.end()) {
      if (it->second.kind == "http" && !it->second.endpoint) {
        throw ManifestError("model '" + id + "' is bound to http without an endpoint");
      }
      if (it->second.kind == "http") return;
    }
    if (simworld && is_sim_model(id)) return;
    throw ManifestError("model '" + id + "' (" + why + ") is not bound to a backend");
  };
  for (const auto& m : methods) {
    if (m == kOmniSearchMethod) {
      if (planner == "scripted" && !simworld) {
        throw ManifestError("the scripted planner needs a simworld dataset");
      }
      if (planner == "model") require_model(planner_model, "planner");
      if (solver_mode == SolverMode::model) {
        require_model(solver_model, "solver");
        if (solver_text_model) require_model(*solver_text_model, "text solver");
      }
      continue;
    }
    require_model(answer_model, "answer model of " + m);
    if (m == "two_step_caption_model") require_model(caption_model, "caption model");
  }
}

ExperimentManifest ExperimentManifest::sim_default() {
  ExperimentManifest m;
  m.simworld = SimWorldSpec{};
  for (auto k : all_pipelines()) m.methods.emplace_back(to_string(k));
  m.methods.emplace_back(kOmniSearchMethod);
  return m;
}

// ---- Predictions ---------------------------------------------------------------

Json Prediction::to_json() const {
  return Json{{"instance_id", instance_id},
              {"method", method},
              {"lang", std::string(to_string(lang))},
              {"prediction", prediction},
              {"trace_ref", trace_ref}};
}

Prediction Prediction::from_json(const Json& j) {
  Prediction p;
  p.instance_id = j.at("instance_id").get<std::string>();
  p.method = j.at("method").get<std::string>();
  p.lang = language_from_string(j.at("lang").get<std::string>());
  p.prediction = j.at("prediction").get<std::string>();
  p.trace_ref = j.value("trace_ref", "");
  return p;
}

std::vector<Prediction> read_predictions(const fs::path& path) {
  std::vector<Prediction> out;
  for (const auto& r : read_line_records(path)) out.push_back(Prediction::from_json(r));
  return out;
}

std::vector<AgentTrace> read_traces(const fs::path& run_dir, const std::vector<std::string>& methods) {
  std::vector<AgentTrace> out;
  for (const auto& m : methods) {
    auto traces = AgentTrace::from_records(read_line_records(run_dir / "traces" / (m + ".jsonl")));
    for (auto& t : traces) out.push_back(std::move(t));
  }
  return out;
}

// ---- Context ---------------------------------------------------------------------

ExperimentContext::ExperimentContext(ExperimentManifest manifest, const fs::path& base_dir)
    : manifest_(std::move(manifest)) {
  manifest_.validate();
  std::shared_ptr<ImageResolver> resolver;
  if (manifest_.simworld) {
    const auto& spec = *manifest_.simworld;
    const sim::World start = sim::World::generate(spec.seed, spec.config);
    sim::Benchmark bench = sim::generate_benchmark(start, spec.mix, spec.n);
    if (spec.advance_to) {
      auto advanced = std::make_shared<const sim::World>(start.advance_time(*spec.advance_to));
      bench = sim::refresh_answers(*advanced, bench);
      world_ = std::move(advanced);
    } else {
      world_ = std::make_shared<const sim::World>(start);
    }
    dataset_ = bench.dataset;
    benchmark_ = std::move(bench);
    resolver = std::make_shared<sim::SimImageResolver>(world_);
  } else {
    const fs::path p = manifest_.dataset_path->is_absolute() ? *manifest_.dataset_path
                                                            : base_dir / *manifest_.dataset_path;
    dataset_ = load_dataset(p);
    resolver = std::make_shared<HttpImageResolver>();
  }

  auto router = world_ ? sim::make_sim_router(world_) : std::make_shared<ModelRouter>();
  for (const auto& [id, b] : manifest_.models) {
    if (b.kind == "http") {
      router->add(id, std::make_shared<HttpChatBackend>(*b.endpoint, b.image_transport, resolver));
    }
  }
  GatewayConfig gc;
  gc.retry.seed = manifest_.seed;
  gc.cache_enabled = manifest_.cache;
  gateway_ = std::make_shared<Gateway>(router, gc);

  std::shared_ptr<SearchBackend> search;
  if (manifest_.search.kind == "http") {
    search = std::make_shared<HttpSearchBackend>(*manifest_.search.endpoint);
  } else {
    search = std::make_shared<sim::SimSearchBackend>(world_);
  }
  ToolboxConfig tc;
  tc.retry.seed = manifest_.seed ^ 0x7f4a7c15ULL;
  tc.cache_enabled = manifest_.cache;
  toolbox_ = std::make_shared<Toolbox>(search, resolver, tc);

  if (manifest_.prices) {
    const fs::path p = manifest_.prices->is_absolute() ? *manifest_.prices : base_dir / *manifest_.prices;
    prices_ = PriceTable::load(p);
  } else {
    prices_ = PriceTable::defaults();
  }
}

void ExperimentContext::set_sleeper(Sleeper sleeper) {
  gateway_->set_sleeper(sleeper);
  toolbox_->set_sleeper(sleeper);
}

std::unique_ptr<Planner> ExperimentContext::make_planner() {
  if (manifest_.planner == "model") {
    return std::make_unique<ModelPlanner>(*gateway_, manifest_.planner_model);
  }
  if (!world_ || !benchmark_) throw NoPlanAvailable("the scripted planner needs a sim benchmark");
  return std::make_unique<ScriptedPlanner>(world_, benchmark_->plans);
}

AgentTrace ExperimentContext::run_one(const std::string& method, const VqaInstance& instance,
                                      Language lang) {
  if (method == kOmniSearchMethod) {
    auto planner = make_planner();
    SolverConfig solver;
    solver.mode = manifest_.solver_mode;
    solver.model_id = manifest_.solver_model;
    solver.text_model_id = manifest_.solver_text_model;
    SessionLimits limits;
    limits.max_steps = manifest_.max_steps;
    limits.parts = manifest_.parts;
    limits.k = manifest_.k;
    limits.evidence_budget = manifest_.evidence_budget;
    return run_session(instance, lang, *planner, *toolbox_, solver, gateway_.get(), limits, method)
        .trace;
  }
  const auto kind = pipeline_from_string(method);
  if (!kind) throw ManifestError("unknown method '" + method + "'");
  PipelineConfig pc;
  pc.k = manifest_.k;
  pc.parts = manifest_.parts;
  pc.evidence_budget = manifest_.evidence_budget;
  pc.answer_model = manifest_.answer_model;
  pc.caption_model = manifest_.caption_model;
  return run_pipeline(*kind, instance, lang, *gateway_, *toolbox_, pc).trace;
}

// ---- Run -------------------------------------------------------------------------

RunResult run_all(ExperimentContext& context) {
  struct Job {
    const std::string* method;
    const VqaInstance* instance;
    Language lang;
  };
  std::vector<Job> jobs;
  const auto& m = context.manifest();
  for (const auto& method : m.methods) {
    for (const auto& inst : context.dataset()) {
      for (auto lang : m.languages) {
        if (inst.has_question(lang)) jobs.push_back({&method, &inst, lang});
      }
    }
  }
  RunResult out;
  out.traces.resize(jobs.size());
  parallel_for(jobs.size(), m.threads, [&](std::size_t i) {
    out.traces[i] = context.run_one(*jobs[i].method, *jobs[i].instance, jobs[i].lang);
  });
  out.predictions.reserve(jobs.size());
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const AgentTrace& t = out.traces[i];
    out.predictions.push_back(Prediction{jobs[i].instance->id, *jobs[i].method, jobs[i].lang,
                                         t.final_answer,
                                         "traces/" + *jobs[i].method + ".jsonl#" + t.session_id});
  }
  return out;
}

RunResult run_experiment(const ExperimentManifest& manifest, const fs::path& base_dir) {
  ExperimentContext context(manifest, base_dir);
  RunResult result = run_all(context);

  const fs::path dir = manifest.output_dir.is_absolute() ? manifest.output_dir
                                                         : base_dir / manifest.output_dir;
  fs::create_directories(dir / "traces");

  // The stored manifest must re-resolve from any working directory.
  ExperimentManifest stored = manifest;
  if (stored.dataset_path && stored.dataset_path->is_relative()) {
    stored.dataset_path = fs::absolute(base_dir / *stored.dataset_path).lexically_normal();
  }
  stored.prices.reset();
  write_file_atomic(dir / "manifest.json", stored.to_json().dump(2) + "\n");
  write_file_atomic(dir / "prices.json", context.prices().to_json().dump(2) + "\n");

  Json hashes = Json::object();
  for (const auto& [name, body] : prompts::all_assets()) hashes[name] = prompts::hash(name);
  write_file_atomic(dir / "prompt_hashes.json", hashes.dump(2) + "\n");

  save_dataset(dir / "dataset.jsonl", context.dataset());
  if (const auto& bench = context.benchmark()) {
    write_file_atomic(dir / "world_manifest.json", context.world()->manifest().dump(2) + "\n");
    std::vector<Json> plans;
    for (const auto& p : bench->plans) plans.push_back(p.to_json(*context.world()));
    write_line_records(dir / "plans.jsonl", plans);
  }

  std::vector<Json> preds;
  for (const auto& p : result.predictions) preds.push_back(p.to_json());
  write_line_records(dir / "predictions.jsonl", preds);

  for (const auto& method : manifest.methods) {
    std::vector<Json> records;
    for (const auto& t : result.traces) {
      if (t.method != method) continue;
      for (auto& r : t.to_records()) records.push_back(std::move(r));
    }
    write_line_records(dir / "traces" / (method + ".jsonl"), records);
  }
  return result;
}

// ---- Score / report ------------------------------------------------------------

ScoreResult score_predictions(const Dataset& dataset, const std::vector<Prediction>& predictions,
                              double threshold) {
  ScoreResult out;
  std::vector<std::string> order;
  std::map<std::string, std::vector<EvalScore>> by_method;
  for (const auto& p : predictions) {
    const VqaInstance* inst = dataset.find(p.instance_id);
    if (!inst) {
      throw EvalError(EvalError::Kind::missing_instance,
                      "prediction for unknown instance '" + p.instance_id + "'");
    }
    const double v = f1_recall(p.prediction, inst->answers, policy_for(p.lang));
    EvalScore s = make_score(p.instance_id, p.method, p.lang, v, threshold);
    if (!by_method.count(p.method)) order.push_back(p.method);
    by_method[p.method].push_back(s);
    out.scores.push_back(std::move(s));
  }
  for (const auto& m : order) out.reports.emplace_back(m, aggregate(by_method[m], dataset));
  return out;
}

ScoreResult score_run(const fs::path& run_dir) {
  const auto manifest = ExperimentManifest::from_json(Json::parse(read_file(run_dir / "manifest.json")));
  const Dataset dataset = load_dataset(run_dir / "dataset.jsonl");
  ScoreResult out =
      score_predictions(dataset, read_predictions(run_dir / "predictions.jsonl"), manifest.threshold);

  std::vector<Json> records;
  for (const auto& s : out.scores) records.push_back(s.to_json());
  write_line_records(run_dir / "scores.jsonl", records);
  Json reports = Json::object();
  for (const auto& [m, r] : out.reports) reports[m] = r.to_json();
  write_file_atomic(run_dir / "category_report.json", reports.dump(2) + "\n");
  write_file_atomic(run_dir / "category_table.txt", format_category_table(out.reports));
  return out;
}

RunReport report_run(const fs::path& run_dir, const ReportOptions& options) {
  const auto manifest = ExperimentManifest::from_json(Json::parse(read_file(run_dir / "manifest.json")));
  const PriceTable prices = fs::exists(run_dir / "prices.json")
                                ? PriceTable::load(run_dir / "prices.json")
                                : PriceTable::defaults();
  RunReport report;
  report.cost = cost_report(read_traces(run_dir, manifest.methods), prices);

  const Dataset dataset = load_dataset(run_dir / "dataset.jsonl");
  const auto predictions = read_predictions(run_dir / "predictions.jsonl");
  const ScoreResult scored = score_predictions(dataset, predictions, manifest.threshold);
  std::map<std::string, std::set<std::string>> correct;
  for (const auto& m : manifest.methods) correct[m];
  for (const auto& s : scored.scores) {
    if (s.correct) correct[s.method].insert(session_id_for(s.instance_id, s.lang));
  }
  report.overlap = overlap_matrix(correct, manifest.threshold);
  // overlap_matrix orders methods by name; keep that order in the files.

  write_line_records(run_dir / "cost_report.jsonl", report.cost.to_records());
  write_file_atomic(run_dir / "cost_table.txt", report.cost.to_table());
  write_file_atomic(run_dir / "overlap.json", report.overlap.to_json().dump(2) + "\n");
  write_file_atomic(run_dir / "overlap_table.txt", report.overlap.to_table());

  if (options.judge) {
    ExperimentContext context(manifest);
    Json methods = Json::array();
    std::vector<double> accuracy, mean_f1;
    for (const auto& m : manifest.methods) {
      std::vector<JudgeItem> items;
      double f1_sum = 0.0;
      std::size_t n = 0;
      for (std::size_t i = 0; i < predictions.size(); ++i) {
        const auto& p = predictions[i];
        if (p.method != m) continue;
        const VqaInstance* inst = dataset.find(p.instance_id);
        items.push_back({session_id_for(p.instance_id, p.lang), inst->question(p.lang), inst->answers,
                         p.prediction});
        f1_sum += scored.scores[i].f1_recall;
        ++n;
      }
      const JudgeResult jr =
          judge_accuracy(items, context.gateway(), manifest.judge_model, manifest.threads);
      const double f1 = n ? f1_sum / static_cast<double>(n) : 0.0;
      accuracy.push_back(100.0 * jr.fraction);
      mean_f1.push_back(100.0 * f1);
      methods.push_back({{"method", m},
                         {"judge_accuracy", 100.0 * jr.fraction},
                         {"mean_f1_recall", 100.0 * f1},
                         {"flagged", jr.flagged}});
    }
    Json j{{"methods", methods}, {"judge_model", manifest.judge_model}};
    try {
      j["pearson"] = pearson(accuracy, mean_f1);
    } catch (const EvalError&) {
      j["pearson"] = nullptr;  // fewer than two methods or a constant series
    }
    write_file_atomic(run_dir / "judge.json", j.dump(2) + "\n");
    report.judge = std::move(j);
  }
  return report;
}

}  // namespace mrag
