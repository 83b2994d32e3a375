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

#include "mrag/cli.hpp"

#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "mrag/dataset_update.hpp"
#include "mrag/experiment.hpp"

namespace mrag {

namespace fs = std::filesystem;

namespace {

ExperimentManifest manifest_or_default(const std::string& path) {
  return path.empty() ? ExperimentManifest::sim_default() : ExperimentManifest::load(path);
}

void print_trace(const AgentTrace& t, std::ostream& out) {
  for (const auto& s : t.steps) {
    out << "--- step " << s.index << " (" << s.label << ")\n";
    if (s.action) {
      out << render_action(*s.action) << "\n";
    } else if (!s.raw_output.empty()) {
      out << s.raw_output << "\n";
    }
    if (s.evidence) {
      out << "[" << to_string(s.evidence->tool) << " \"" << s.evidence->query << "\": "
          << s.evidence->hits.size() << " hit(s)]\n";
    }
    if (s.feedback) out << "feedback: " << *s.feedback << "\n";
    for (const auto& d : s.diagnostics) out << "note: " << d << "\n";
  }
  out << "status: " << to_string(t.status) << "\n";
  out << "answer: " << t.final_answer << "\n";
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multimodal retrieval agent, baselines and evaluation harness", "mrag"};
  app.require_subcommand(1);

  // dataset
  auto* dataset = app.add_subcommand("dataset", "Dataset tooling");
  dataset->require_subcommand(1);
  std::string dataset_path;
  bool json_out = false;
  auto* validate = dataset->add_subcommand("validate", "Check a dataset file");
  validate->add_option("path", dataset_path, "Dataset line-record file")->required();
  auto* stats = dataset->add_subcommand("stats", "Label and length statistics");
  stats->add_option("path", dataset_path, "Dataset line-record file")->required();
  stats->add_flag("--json", json_out, "Print JSON instead of a table");
  std::string manifest_path, out_path;
  auto* update = dataset->add_subcommand("update-check", "Flag answers that may be out of date");
  update->add_option("--manifest", manifest_path, "Experiment manifest (default: sim world)");
  update->add_option("--out", out_path, "Review queue output file");

  // simworld
  auto* simworld = app.add_subcommand("simworld", "Deterministic knowledge world");
  simworld->require_subcommand(1);
  std::uint64_t seed = 42;
  std::string config_path, mix_arg = "table2", out_dir;
  int n = 200;
  std::optional<int> advance_to;
  auto* generate = simworld->add_subcommand("generate", "Generate a world and print its manifest hash");
  generate->add_option("--seed", seed, "World seed");
  generate->add_option("--config", config_path, "World config JSON file");
  generate->add_option("--out", out_dir, "Write manifest, entities, facts and documents here");
  auto* bench = simworld->add_subcommand("bench", "Generate a benchmark over a world");
  bench->add_option("--seed", seed, "World seed");
  bench->add_option("--config", config_path, "World config JSON file");
  bench->add_option("--n", n, "Number of questions")->check(CLI::PositiveNumber);
  bench->add_option("--mix", mix_arg, "'table2' or a mix JSON file");
  bench->add_option("--advance-to", advance_to, "Re-evaluate answers at this day")
      ->check(CLI::NonNegativeNumber);
  bench->add_option("--out", out_dir, "Output directory")->required();

  // run / score / report
  auto* run = app.add_subcommand("run", "Execute an experiment manifest");
  std::string run_manifest, output_override;
  run->add_option("manifest", run_manifest, "Manifest JSON file")->required();
  run->add_option("--output-dir", output_override, "Override the manifest output directory");
  std::string run_dir;
  auto* score = app.add_subcommand("score", "Score the predictions of a run directory");
  score->add_option("run_dir", run_dir, "Run directory")->required();
  bool with_judge = false;
  auto* report = app.add_subcommand("report", "Cost, overlap and judge tables for a run");
  report->add_option("run_dir", run_dir, "Run directory")->required();
  report->add_flag("--judge", with_judge, "Also ask the judge model for accuracy");

  // agent
  auto* agent = app.add_subcommand("agent", "Single-question agent sessions");
  agent->require_subcommand(1);
  std::string instance_id, question, image, lang_arg = "en";
  auto* ask = agent->add_subcommand("ask", "Answer one question and print the trace");
  ask->add_option("--manifest", manifest_path, "Experiment manifest (default: sim world)");
  ask->add_option("--instance", instance_id, "Instance id from the manifest's dataset");
  ask->add_option("--question", question, "Ad-hoc question (needs a model planner)");
  ask->add_option("--image", image, "Image locator for --question");
  ask->add_option("--lang", lang_arg, "en or zh")->check(CLI::IsMember({"en", "zh"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return 0;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 2;
  }

  try {
    if (validate->parsed()) {
      const Dataset d = load_dataset(dataset_path);
      out << "ok: " << d.size() << " instances\n";
    } else if (stats->parsed()) {
      const StatsReport r = compute_stats(load_dataset(dataset_path));
      out << (json_out ? r.to_json().dump(2) + "\n" : r.to_table());
    } else if (update->parsed()) {
      ExperimentContext ctx(manifest_or_default(manifest_path));
      UpdateCheckConfig cfg;
      cfg.k = ctx.manifest().k;
      cfg.parts = ctx.manifest().parts;
      cfg.evidence_budget = ctx.manifest().evidence_budget;
      cfg.threads = ctx.manifest().threads;
      const auto entries = update_check(ctx.dataset(), ctx.toolbox(), ctx.gateway(),
                                        ctx.manifest().judge_model, cfg);
      std::vector<Json> records;
      std::map<std::string, int> tally;
      for (const auto& e : entries) {
        records.push_back(e.to_json());
        ++tally[std::string(to_string(e.verdict))];
      }
      if (!out_path.empty()) write_line_records(out_path, records);
      for (const auto& [v, c] : tally) out << v << ": " << c << "\n";
    } else if (generate->parsed()) {
      const sim::WorldConfig cfg = config_path.empty()
                                       ? sim::WorldConfig{}
                                       : sim::WorldConfig::from_json(Json::parse(read_file(config_path)));
      const sim::World w = sim::World::generate(seed, cfg);
      if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        write_file_atomic(fs::path(out_dir) / "world_manifest.json", w.manifest().dump(2) + "\n");
        write_line_records(fs::path(out_dir) / "entities.jsonl", w.entity_records());
        write_line_records(fs::path(out_dir) / "facts.jsonl", w.fact_records());
        write_line_records(fs::path(out_dir) / "documents.jsonl", w.document_records());
      }
      out << w.manifest_hash() << "\n";
    } else if (bench->parsed()) {
      const sim::WorldConfig cfg = config_path.empty()
                                       ? sim::WorldConfig{}
                                       : sim::WorldConfig::from_json(Json::parse(read_file(config_path)));
      const sim::BenchmarkMix mix = mix_arg == "table2"
                                        ? sim::BenchmarkMix::table2()
                                        : sim::BenchmarkMix::from_json(Json::parse(read_file(mix_arg)));
      sim::World w = sim::World::generate(seed, cfg);
      sim::Benchmark b = sim::generate_benchmark(w, mix, n);
      if (advance_to) {
        w = w.advance_time(*advance_to);
        b = sim::refresh_answers(w, b);
      }
      fs::create_directories(out_dir);
      save_dataset(fs::path(out_dir) / "dataset.jsonl", b.dataset);
      std::vector<Json> plans;
      for (const auto& p : b.plans) plans.push_back(p.to_json(w));
      write_line_records(fs::path(out_dir) / "plans.jsonl", plans);
      write_file_atomic(fs::path(out_dir) / "world_manifest.json", w.manifest().dump(2) + "\n");
      out << "wrote " << b.dataset.size() << " questions to " << out_dir << "\n";
    } else if (run->parsed()) {
      ExperimentManifest m = ExperimentManifest::load(run_manifest);
      if (!output_override.empty()) m.output_dir = output_override;
      const fs::path base = fs::path(run_manifest).parent_path();
      const RunResult r = run_experiment(m, base.empty() ? fs::path(".") : base);
      out << "ran " << r.predictions.size() << " sessions into "
          << (m.output_dir.is_absolute() ? m.output_dir : base / m.output_dir).string() << "\n";
    } else if (score->parsed()) {
      const ScoreResult r = score_run(run_dir);
      out << format_category_table(r.reports);
    } else if (report->parsed()) {
      ReportOptions opt;
      opt.judge = with_judge;
      const RunReport r = report_run(run_dir, opt);
      out << r.cost.to_table() << "\n" << r.overlap.to_table();
      if (r.judge) out << "\n" << r.judge->dump(2) << "\n";
    } else if (ask->parsed()) {
      if (instance_id.empty() == question.empty()) {
        err << "agent ask: give exactly one of --instance and --question\n";
        return 2;
      }
      ExperimentContext ctx(manifest_or_default(manifest_path));
      const Language lang = language_from_string(lang_arg);
      VqaInstance adhoc;
      const VqaInstance* inst = nullptr;
      if (!instance_id.empty()) {
        inst = ctx.dataset().find(instance_id);
        if (!inst) {
          err << "agent ask: unknown instance '" << instance_id << "'\n";
          return 1;
        }
      } else {
        adhoc.id = "adhoc";
        (lang == Language::en ? adhoc.question_en : adhoc.question_zh) = question;
        adhoc.monolingual = true;
        adhoc.image.locator = image;
        adhoc.answers = {"-"};
        inst = &adhoc;
      }
      print_trace(ctx.run_one(kOmniSearchMethod, *inst, lang), out);
    }
  } catch (const DatasetError& e) {
    err << "error: " << e.what() << "\n";
    for (const auto& d : e.diagnostics()) err << "  " << d << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace mrag
