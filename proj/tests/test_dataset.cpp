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

#include <algorithm>
#include <cmath>
#include <fstream>

#include "doctest.h"
#include "mrag/dataset.hpp"
#include "mrag/dataset_update.hpp"
#include "mrag/sim_models.hpp"
#include "mrag/simworld.hpp"
#include "test_support.hpp"

using namespace mrag;
using mrag::testing::sample_record;
using mrag::testing::TempDir;

namespace {

DatasetError::Kind error_kind(const Json& record) {
  try {
    parse_instance(record);
  } catch (const DatasetError& e) {
    return e.kind();
  }
  FAIL("expected a DatasetError");
  return DatasetError::Kind::invalid_value;
}

std::string error_field(const Json& record) {
  try {
    parse_instance(record);
  } catch (const DatasetError& e) {
    return e.field();
  }
  return "";
}

VqaInstance labelled(const std::string& id, UpdateFreq f, Hops h, bool visual) {
  Json r = sample_record(id);
  r["answer_update_frequency"] = std::string(to_string(f));
  r["reasoning_steps"] = std::string(to_string(h));
  r["needs_external_visual"] = visual ? "yes" : "no";
  return parse_instance(r);
}

}  // namespace

TEST_SUITE("dataset") {
  TEST_CASE("full record maps every field") {
    const VqaInstance inst = parse_instance(sample_record());
    CHECK(inst.id == "q1");
    CHECK(inst.update_freq == UpdateFreq::fast);
    CHECK(inst.hops == Hops::more_than_two);
    CHECK_FALSE(inst.needs_external_visual);
    CHECK(inst.answers == std::vector<std::string>{"Jane Doe"});
    CHECK(format_date(inst.last_verified) == "2024-05-01");
    CHECK_FALSE(inst.image.content_hash.has_value());
  }

  TEST_CASE("table spellings are accepted as aliases") {
    Json r = sample_record();
    r["answer_update_frequency"] = "Fast Updating";
    r["reasoning_steps"] = "\xE2\x89\xA4 2-hop";
    r["needs_external_visual"] = true;
    const VqaInstance inst = parse_instance(r);
    CHECK(inst.update_freq == UpdateFreq::fast);
    CHECK(inst.hops == Hops::at_most_two);
    CHECK(inst.needs_external_visual);
  }

  TEST_CASE("schema violations name the field") {
    Json r = sample_record();
    r.erase("golden_query");
    CHECK(error_kind(r) == DatasetError::Kind::missing_field);
    CHECK(error_field(r) == "golden_query");

    r = sample_record();
    r["answer_update_frequency"] = "yearly";
    CHECK(error_kind(r) == DatasetError::Kind::bad_enum_value);
    CHECK(error_field(r) == "answer_update_frequency");

    r = sample_record();
    r["answers"] = Json::array();
    CHECK(error_kind(r) == DatasetError::Kind::empty_answer_list);

    r = sample_record();
    r["answers"] = {"  ", "..."};
    CHECK(error_kind(r) == DatasetError::Kind::empty_answer_list);

    r = sample_record();
    r["domain"] = "astrology";
    CHECK(error_kind(r) == DatasetError::Kind::bad_enum_value);

    r = sample_record();
    r["last_verified"] = "2024-02-30";
    CHECK(error_kind(r) == DatasetError::Kind::invalid_value);
  }

  TEST_CASE("monolingual flag allows one empty question") {
    Json r = sample_record();
    r["question_zh"] = "";
    CHECK(error_kind(r) == DatasetError::Kind::missing_field);
    r["monolingual"] = "yes";
    const VqaInstance inst = parse_instance(r);
    CHECK(inst.has_question(Language::en));
    CHECK_FALSE(inst.has_question(Language::zh));
    CHECK(inst.question(Language::zh) == inst.question_en);
  }

  TEST_CASE("serialize then parse is the identity") {
    Json r = sample_record("rt");
    r["image_hash"] = std::string(64, 'a');
    r["answers"] = {"Jane Doe", "J. Doe"};
    const VqaInstance a = parse_instance(r);
    const VqaInstance b = parse_instance_line(to_line(serialize_instance(a)));
    CHECK(a == b);
    for (const auto& inst : sim::table2_fixture()) {
      CHECK(parse_instance(serialize_instance(inst)) == inst);
    }
  }

  TEST_CASE("load_dataset: sizes, duplicates, aggregate errors") {
    TempDir dir;
    const auto three = dir / "three.jsonl";
    write_line_records(three, {sample_record("a"), sample_record("b"), sample_record("c")});
    CHECK(load_dataset(three).size() == 3);

    const auto empty = dir / "empty.jsonl";
    write_file_atomic(empty, "");
    CHECK(load_dataset(empty).size() == 0);

    const auto dup = dir / "dup.jsonl";
    write_line_records(dup, {sample_record("a"), sample_record("a")});
    try {
      load_dataset(dup);
      FAIL("duplicate id accepted");
    } catch (const DatasetError& e) {
      CHECK(e.kind() == DatasetError::Kind::duplicate_id);
      CHECK(e.record_id() == "a");
    }

    Json bad = sample_record("bad");
    bad.erase("answers");
    const auto mixed = dir / "mixed.jsonl";
    write_file_atomic(mixed, to_line(sample_record("ok")) + "\n" + to_line(bad) + "\n{not json\n");
    try {
      load_dataset(mixed);
      FAIL("bad records accepted");
    } catch (const DatasetError& e) {
      CHECK(e.kind() == DatasetError::Kind::aggregate_parse_error);
      CHECK(e.diagnostics().size() == 2);
    }

    CHECK_THROWS_AS(load_dataset(dir / "missing.jsonl"), IoError);
  }

  TEST_CASE("save_dataset round trip") {
    TempDir dir;
    const Dataset d({parse_instance(sample_record("a")), parse_instance(sample_record("b"))});
    save_dataset(dir / "d.jsonl", d);
    const Dataset back = load_dataset(dir / "d.jsonl");
    REQUIRE(back.size() == 2);
    CHECK(back[0] == d[0]);
    CHECK(back[1] == d[1]);
  }

  TEST_CASE("image resolution hashes the bytes") {
    TempDir dir;
    write_file_atomic(dir / "img.bin", "abc");
    FileImageResolver files;
    const ImageRef r = resolve_image(ImageRef{"file://" + (dir / "img.bin").string(), {}}, files);
    CHECK(r.content_hash == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(resolve_image(r, files) == r);
  }

  TEST_CASE("stats on a hand-built set") {
    const Dataset d({labelled("a", UpdateFreq::fast, Hops::more_than_two, false),
                     labelled("b", UpdateFreq::fast, Hops::at_most_two, true),
                     labelled("c", UpdateFreq::slow, Hops::at_most_two, false),
                     labelled("d", UpdateFreq::never, Hops::at_most_two, true)});
    const StatsReport s = compute_stats(d);
    CHECK(s.total == 4);
    CHECK(s.per_update_freq.at(UpdateFreq::fast) == 2);
    CHECK(s.per_update_freq.at(UpdateFreq::slow) == 1);
    CHECK(s.per_update_freq.at(UpdateFreq::never) == 1);
    CHECK(s.per_hops.at(Hops::more_than_two) == 1);
    CHECK(s.per_hops.at(Hops::at_most_two) == 3);
    CHECK(s.visual_yes == 2);
    CHECK(s.visual_no == 2);
    CHECK(s.fast_and_multi_hop == 1);
    CHECK(s.fast_and_visual == 1);
    CHECK(s.multi_hop_and_visual == 0);
    CHECK(s.percent(s.per_update_freq.at(UpdateFreq::fast)) == doctest::Approx(50.0));
    CHECK(s.questions_en == 4);
    CHECK(s.questions_zh == 4);
  }

  TEST_CASE("stats on an empty dataset are all zero") {
    const StatsReport s = compute_stats(Dataset{});
    CHECK(s.total == 0);
    CHECK(s.visual_yes + s.visual_no == 0);
    CHECK(s.percent(0) == 0.0);
    CHECK(s.question_length.at(Language::en).mean == 0.0);
    CHECK(s.answer_length.at(Language::zh).max == 0);
    CHECK_FALSE(s.to_table().empty());
  }

  TEST_CASE("stats reproduce the published label counts") {
    const StatsReport s = compute_stats(sim::table2_fixture());
    CHECK(s.total == 1452);
    CHECK(s.per_update_freq.at(UpdateFreq::fast) == 385);
    CHECK(s.per_update_freq.at(UpdateFreq::slow) == 494);
    CHECK(s.per_update_freq.at(UpdateFreq::never) == 573);
    CHECK(s.percent(385) == doctest::Approx(26.5));
    CHECK(s.per_hops.at(Hops::more_than_two) == 387);
    CHECK(s.visual_yes == 865);
    CHECK(s.fast_and_multi_hop == 112);
    CHECK(s.fast_and_visual == 178);
    CHECK(s.multi_hop_and_visual == 237);
    CHECK(s.questions_en == 715);
    CHECK(s.questions_zh == 737);
    std::size_t domains = 0;
    for (const auto& [k, v] : s.per_domain) domains += v;
    CHECK(domains == s.total);
  }

  TEST_CASE("diversity: identical, orthogonal, brute force") {
    std::vector<VqaInstance> insts;
    const std::vector<std::string> texts = {"red bridge over the river", "the blue tower",
                                            "red tower near the park", "a quiet park",
                                            "bridge bridge river"};
    for (std::size_t i = 0; i < texts.size(); ++i) {
      Json r = sample_record("d" + std::to_string(i));
      r["question_en"] = texts[i];
      insts.push_back(parse_instance(r));
    }
    const Dataset d(insts);

    const Embedder constant = [](std::string_view) { return std::vector<double>{0.6, 0.8}; };
    CHECK(diversity(d, constant, DiversityField::question) == doctest::Approx(0.0));

    const Dataset two({insts[0], insts[1]});
    const Embedder axis = [&](std::string_view t) {
      return t == texts[0] ? std::vector<double>{1.0, 0.0} : std::vector<double>{0.0, 1.0};
    };
    CHECK(diversity(two, axis, DiversityField::question) == doctest::Approx(1.0));

    const TermFrequencyEmbedder tf(texts);
    const Embedder e = [&](std::string_view t) { return tf(t); };
    double sum = 0.0;
    int pairs = 0;
    for (std::size_t i = 0; i < texts.size(); ++i) {
      for (std::size_t j = i + 1; j < texts.size(); ++j) {
        const auto u = tf(texts[i]), v = tf(texts[j]);
        double dot = 0.0;
        for (std::size_t k = 0; k < u.size(); ++k) dot += u[k] * v[k];
        sum += 1.0 - dot;
        ++pairs;
      }
    }
    const double oracle = sum / pairs;
    CHECK(diversity(d, e, DiversityField::question, 1) == doctest::Approx(oracle).epsilon(1e-12));
    CHECK(diversity(d, e, DiversityField::question, 4) == doctest::Approx(oracle).epsilon(1e-12));

    std::vector<VqaInstance> reversed(insts.rbegin(), insts.rend());
    CHECK(diversity(Dataset(reversed), e, DiversityField::question) ==
          doctest::Approx(oracle).epsilon(1e-12));

    try {
      diversity(Dataset({insts[0]}), e, DiversityField::question);
      FAIL("single instance accepted");
    } catch (const DatasetError& err) {
      CHECK(err.kind() == DatasetError::Kind::too_few_instances);
    }
  }

  TEST_CASE("term-frequency embedder is unit norm") {
    const TermFrequencyEmbedder tf({"a b c", "c d"});
    CHECK(tf.dimension() == 4);
    const auto v = tf("c c d unknown");
    double n = 0.0;
    for (double x : v) n += x * x;
    CHECK(n == doctest::Approx(1.0));
    for (double x : tf("zzz")) CHECK(x == 0.0);
  }

  TEST_CASE("update verdict parsing") {
    CHECK(parse_update_verdict("looks fine\nUNCHANGED") == UpdateVerdict::unchanged);
    CHECK(parse_update_verdict("changed\nverdict: needs_update.") == UpdateVerdict::needs_update);
    CHECK(parse_update_verdict("UNCERTAIN") == UpdateVerdict::uncertain);
    CHECK_FALSE(parse_update_verdict("The answer is probably still right.").has_value());
    CHECK_FALSE(parse_update_verdict("UNCHANGED\nbut maybe not").has_value());
  }

  TEST_CASE("update check against the sim world") {
    const auto start = sim::World::generate(42, {});
    const sim::Benchmark bench = sim::generate_benchmark(start, sim::BenchmarkMix::table2(), 60);
    auto later = std::make_shared<const sim::World>(start.advance_time(start.config().horizon_days));
    Toolbox search(std::make_shared<sim::SimSearchBackend>(later),
                   std::make_shared<sim::SimImageResolver>(later));
    Gateway judge(sim::make_sim_router(later));
    const auto entries = update_check(bench.dataset, search, judge, sim::kSimJudgeModel);
    REQUIRE(entries.size() == bench.dataset.size());

    int needs = 0, unchanged = 0;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto& e = entries[i];
      const auto& plan = bench.plans[i];
      CHECK(e.instance_id == bench.dataset[i].id);
      CHECK_FALSE(e.evidence_summary.empty());
      CHECK(e.timestamp == later->date());
      const auto& rel = later->relations()[*later->relation_index(plan.hops.back().relation)];
      if (rel.modality != sim::Modality::web) continue;
      const auto now = sim::oracle_answers(*later, plan);
      const bool changed = now.front() != bench.dataset[i].answers.front();
      CHECK(e.verdict == (changed ? UpdateVerdict::needs_update : UpdateVerdict::unchanged));
      if (changed) {
        ++needs;
        CHECK(e.evidence_summary.find(now.front()) != std::string::npos);
      } else {
        ++unchanged;
      }
    }
    CHECK(needs > 0);
    CHECK(unchanged > 0);

    // Same ports, same entries.
    UpdateCheckConfig parallel;
    parallel.threads = 4;
    const auto again = update_check(bench.dataset, search, judge, sim::kSimJudgeModel, parallel);
    for (std::size_t i = 0; i < entries.size(); ++i) CHECK(again[i].to_json() == entries[i].to_json());
  }

  TEST_CASE("free-prose judge output becomes uncertain") {
    const auto world = std::make_shared<const sim::World>(sim::World::generate(3, {}));
    const sim::Benchmark bench = sim::generate_benchmark(*world, sim::BenchmarkMix::table2(), 3);
    Toolbox search(std::make_shared<sim::SimSearchBackend>(world),
                   std::make_shared<sim::SimImageResolver>(world));
    Gateway judge(std::make_shared<ScriptedBackend>(std::vector<std::string>{"I think it is fine."}));
    const auto entries = update_check(bench.dataset, search, judge, "any");
    REQUIRE(entries.size() == 3);
    for (const auto& e : entries) {
      CHECK(e.verdict == UpdateVerdict::uncertain);
      CHECK(e.unparsable);
      CHECK(ReviewQueueEntry::from_json(e.to_json()).to_json() == e.to_json());
    }
  }

  TEST_CASE("backend errors carry the instance id") {
    const auto world = std::make_shared<const sim::World>(sim::World::generate(3, {}));
    const sim::Benchmark bench = sim::generate_benchmark(*world, sim::BenchmarkMix::table2(), 2);
    Toolbox search(std::make_shared<sim::SimSearchBackend>(world),
                   std::make_shared<sim::SimImageResolver>(world));
    Gateway judge(std::make_shared<ModelRouter>());
    try {
      update_check(bench.dataset, search, judge, "unbound");
      FAIL("expected a backend error");
    } catch (const BackendError& e) {
      CHECK(std::string(e.what()).find(bench.dataset[0].id) != std::string::npos);
    }
  }
}
