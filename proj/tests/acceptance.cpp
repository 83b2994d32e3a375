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


// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <thread>

#include "generators.hpp"
#include "mrag/action_grammar.hpp"
#include "mrag/dataset.hpp"
#include "mrag/evaluation.hpp"
#include "mrag/experiment.hpp"
#include "mrag/gateway.hpp"
#include "mrag/simworld.hpp"
#include "mrag/telemetry.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace mrag;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kMetricBudgetSeconds = 5.0;
constexpr double kExpenseTolerance = 5e-5;
constexpr double kOrderingGapPoints = 5.0;
constexpr double kOrderingBudgetSeconds = 60.0;
constexpr double kTwoStepMultiHopCeiling = 0.5;
constexpr double kOmniMultiHopFloor = 0.9;
constexpr double kFreshFastFloor = 0.95;
constexpr double kStaleDropPoints = 10.0;
constexpr double kStatTolerance = 1e-9;
constexpr int kAdvanceDay = 180;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1e", v);
  return buf;
}

std::string fmt(double v, int prec = 2) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(prec);
  os << v;
  return os.str();
}

// ---- Sim runs shared by criteria 4 to 6 -------------------------------------

struct SimRun {
  Dataset dataset;
  std::vector<EvalScore> scores;
  std::map<std::string, CategoryReport> reports;
  double seconds = 0.0;

  double cell(const std::string& method, const std::string& col) const {
    const auto& c = reports.at(method).cells.at(col);
    return c.mean ? *c.mean * 100.0 : 0.0;
  }
};

SimRun sim_run(std::optional<int> advance_to) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentManifest m = ExperimentManifest::sim_default();
  m.simworld->advance_to = advance_to;
  ExperimentContext ctx(m);
  const RunResult r = run_all(ctx);
  ScoreResult s = score_predictions(ctx.dataset(), r.predictions, m.threshold);
  SimRun out;
  out.dataset = ctx.dataset();
  out.scores = std::move(s.scores);
  for (auto& [method, rep] : s.reports) out.reports.emplace(method, std::move(rep));
  out.seconds = seconds_since(t0);
  return out;
}

const SimRun& day0() {
  static const SimRun r = sim_run(std::nullopt);
  return r;
}

const SimRun& advanced() {
  static const SimRun r = sim_run(kAdvanceDay);
  return r;
}

// ---- Criteria ------------------------------------------------------------------

Outcome metric_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(1);
  std::size_t mismatches = 0, total = 0;
  for (SegmentLanguage lang : {SegmentLanguage::en, SegmentLanguage::zh}) {
    const bool zh = lang == SegmentLanguage::zh;
    for (int i = 0; i < 1000; ++i) {
      const auto pred = testing::random_tokenized(rng, zh, 0, 12);
      std::vector<std::string> gold_text;
      std::vector<std::vector<std::string>> gold_tokens;
      for (int g = 1 + static_cast<int>(rng() % 3); g > 0; --g) {
        auto t = testing::random_tokenized(rng, zh, 1, 5);
        gold_text.push_back(t.text);
        gold_tokens.push_back(t.tokens);
      }
      ++total;
      if (f1_recall(pred.text, gold_text, SegmenterPolicy{lang}) !=
          testing::token_set_oracle(pred.tokens, gold_tokens)) {
        ++mismatches;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < kMetricBudgetSeconds,
          std::to_string(total - mismatches) + "/" + std::to_string(total) +
              " pairs (en, zh) match the token-set oracle in " + fmt(secs, 3) + " s"};
}

Outcome expense_reproduction() {
  const ModelPrice& p = PriceTable::defaults().at("gpt-4v");
  const double a = expense(1454.0, 132.5, p);
  const double b = expense(3028.5, 476.9, p);
  const bool ok = std::abs(a - 0.0185) <= kExpenseTolerance && std::abs(b - 0.0446) <= kExpenseTolerance;
  return {ok, "(1454.0, 132.5) -> " + fmt(a, 6) + ", (3028.5, 476.9) -> " + fmt(b, 6)};
}

Outcome grammar_round_trip() {
  std::mt19937_64 rng(3);
  int round_trips = 0, crashes = 0;
  for (int i = 0; i < 10000; ++i) {
    const Action a = testing::random_action(rng);
    try {
      if (parse_action(render_action(a)) == a) ++round_trips;
    } catch (const GrammarError&) {
    }
  }
  for (int i = 0; i < 10000; ++i) {
    const std::string bytes = testing::fuzz_bytes(rng);
    try {
      (void)parse_action(bytes);
    } catch (const GrammarError&) {
    } catch (...) {
      ++crashes;
    }
  }
  return {round_trips == 10000 && crashes == 0,
          std::to_string(round_trips) + "/10000 round trips, " + std::to_string(crashes) +
              " unexpected failures on 10000 fuzzed inputs"};
}

Outcome table3_ordering() {
  const SimRun& r = day0();
  const double none = r.cell("no_retrieval", "all");
  const double single = std::max(r.cell("single_hop_image", "all"), r.cell("single_hop_web", "all"));
  const double two = std::max(r.cell("two_step_retrieved_caption", "all"),
                              r.cell("two_step_caption_model", "all"));
  const double omni = r.cell(kOmniSearchMethod, "all");
  const double golden = r.cell("golden_query_upper_bound", "all");
  const bool ok = single - none >= kOrderingGapPoints && two - single >= kOrderingGapPoints &&
                  omni - two >= kOrderingGapPoints && omni <= golden &&
                  r.seconds < kOrderingBudgetSeconds;
  return {ok, "no_retrieval " + fmt(none) + " < single-hop " + fmt(single) + " < two-step " +
                  fmt(two) + " < omnisearch " + fmt(omni) + " <= golden " + fmt(golden) + " (" +
                  std::to_string(r.dataset.size()) + " questions, " + fmt(r.seconds, 2) + " s)"};
}

Outcome multi_hop_hardness() {
  const SimRun& r = day0();
  const double a = r.cell("two_step_retrieved_caption", ">2-hop") / 100.0;
  const double b = r.cell("two_step_caption_model", ">2-hop") / 100.0;
  const double omni = r.cell(kOmniSearchMethod, ">2-hop") / 100.0;
  const bool ok = a <= kTwoStepMultiHopCeiling && b <= kTwoStepMultiHopCeiling && omni >= kOmniMultiHopFloor;
  return {ok, ">2-hop mean: retrieved caption " + fmt(a, 3) + ", caption model " + fmt(b, 3) +
                  ", omnisearch " + fmt(omni, 3) + " (" +
                  std::to_string(r.reports.at(kOmniSearchMethod).cells.at(">2-hop").count) +
                  " sessions)"};
}

Outcome fast_changing() {
  const SimRun& before = day0();
  const SimRun& after = advanced();
  std::size_t fast = 0, matched = 0;
  for (const auto& s : after.scores) {
    if (s.method != kOmniSearchMethod) continue;
    if (after.dataset.find(s.instance_id)->update_freq != UpdateFreq::fast) continue;
    ++fast;
    matched += s.f1_recall == 1.0;
  }
  const double frac = fast ? static_cast<double>(matched) / static_cast<double>(fast) : 0.0;
  std::string detail = "omnisearch matches " + std::to_string(matched) + "/" + std::to_string(fast) +
                       " fast sessions at day " + std::to_string(kAdvanceDay) + "; fast-cell drop:";
  bool drops = true;
  for (const char* m : {"two_step_retrieved_caption", "golden_query_upper_bound"}) {
    const double drop = before.cell(m, "fast") - after.cell(m, "fast");
    detail += std::string(" ") + m + " " + fmt(before.cell(m, "fast")) + " -> " + fmt(after.cell(m, "fast"));
    drops = drops && drop >= kStaleDropPoints;
  }
  return {fast > 0 && frac >= kFreshFastFloor && drops, detail};
}

Outcome kappa_checks() {
  std::mt19937_64 rng(7);
  double worst = 0.0, worst_perm = 0.0;
  for (int t = 0; t < 100; ++t) {
    const int raters = 2 + static_cast<int>(rng() % 5);
    const int cats = 2 + static_cast<int>(rng() % 4);
    auto table = testing::random_rating_table(rng, 5 + static_cast<int>(rng() % 20), raters, cats);
    const double k = fleiss_kappa(table);
    worst = std::max(worst, std::abs(k - testing::kappa_oracle(table)));
    std::vector<int> perm(cats);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    auto permuted = table;
    for (std::size_t i = 0; i < table.size(); ++i) {
      for (int j = 0; j < cats; ++j) permuted[i][perm[j]] = table[i][j];
    }
    worst_perm = std::max(worst_perm, std::abs(fleiss_kappa(permuted) - k));
  }
  const double perfect = fleiss_kappa({{4, 0, 0}, {0, 4, 0}, {0, 0, 4}, {4, 0, 0}});
  return {worst <= kStatTolerance && worst_perm <= kStatTolerance && perfect == 1.0,
          "max |kappa - oracle| " + sci(worst) + ", permutation " +
              sci(worst_perm) + ", perfect agreement " + fmt(perfect, 1)};
}

Outcome pearson_checks() {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> nd;
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    std::vector<double> x(5 + rng() % 40), y;
    for (auto& v : x) v = nd(rng);
    for (std::size_t i = 0; i < x.size(); ++i) y.push_back(nd(rng));
    const double r = pearson(x, y);
    const double a = (rng() % 2 ? 1.0 : -1.0) * std::exp(nd(rng));
    const double b = nd(rng) * 10.0;
    std::vector<double> ax = x;
    for (auto& v : ax) v = a * v + b;
    worst = std::max(worst, std::abs(pearson(ax, y) - (a > 0 ? r : -r)));
  }
  const std::vector<double> x{1, 2, 3};
  const double up = pearson(x, std::vector<double>{2, 4, 6});
  const double down = pearson(x, std::vector<double>{6, 4, 2});
  bool constant = false;
  try {
    pearson(x, std::vector<double>{3, 3, 3});
  } catch (const EvalError& e) {
    constant = e.kind() == EvalError::Kind::constant_series;
  }
  return {worst <= kStatTolerance && up == 1.0 && down == -1.0 && constant,
          "max scale/shift deviation " + sci(worst) + ", textbook " + fmt(up, 1) +
              " / " + fmt(down, 1) + ", constant series rejected"};
}

Outcome determinism() {
  testing::TempDir dir;
  std::vector<fs::path> runs{dir / "a", dir / "b"};
  for (const auto& run : runs) {
    ExperimentManifest m = ExperimentManifest::sim_default();
    m.output_dir = run;
    run_experiment(m);
    score_run(run);
    ReportOptions opt;
    opt.judge = true;
    report_run(run, opt);
  }
  std::vector<std::string> files{"predictions.jsonl", "scores.jsonl", "category_report.json",
                                 "category_table.txt", "cost_report.jsonl", "cost_table.txt",
                                 "overlap.json", "overlap_table.txt", "judge.json", "plans.jsonl",
                                 "dataset.jsonl"};
  for (const auto& e : fs::directory_iterator(runs[0] / "traces")) {
    files.push_back("traces/" + e.path().filename().string());
  }
  std::size_t same = 0;
  std::string differing;
  for (const auto& f : files) {
    if (read_file(runs[0] / f) == read_file(runs[1] / f)) {
      ++same;
    } else {
      differing += " " + f;
    }
  }
  return {same == files.size(), std::to_string(same) + "/" + std::to_string(files.size()) +
                                    " run files byte-identical" +
                                    (differing.empty() ? "" : "; differ:" + differing)};
}

Outcome gateway_contracts() {
  std::mt19937_64 rng(10);
  int violations = 0;
  for (int s = 0; s < 1000; ++s) {
    const int budget = static_cast<int>(rng() % 5);
    std::vector<std::optional<BackendError::Kind>> schedule(rng() % 7);
    for (auto& f : schedule) {
      switch (rng() % 4) {
        case 0: f = std::nullopt; break;
        case 1: f = BackendError::Kind::transient; break;
        case 2: f = BackendError::Kind::timeout; break;
        default: f = rng() % 3 == 0 ? std::optional(BackendError::Kind::permanent)
                                     : std::optional(BackendError::Kind::transient);
      }
    }
    const auto expect = testing::retry_oracle(schedule, budget);

    auto echo = std::make_shared<EchoBackend>();
    auto faulty = std::make_shared<FaultInjectingBackend>(echo, schedule);
    GatewayConfig cfg;
    cfg.retry.budget = budget;
    cfg.retry.seed = rng();
    Gateway gw(faulty, cfg);
    int sleeps = 0;
    gw.set_sleeper([&](double ms) {
      ++sleeps;
      if (ms < 0 || ms > cfg.retry.max_delay_ms * (1 + cfg.retry.jitter)) ++violations;
    });
    const std::vector<ChatMessage> conv{ChatMessage::user_text("ping " + std::to_string(s))};

    // Concurrent identical requests share one backend invocation sequence.
    const int callers = 1 + static_cast<int>(rng() % 4);
    std::vector<int> ok(callers, 0);
    std::vector<std::thread> threads;
    for (int c = 0; c < callers; ++c) {
      threads.emplace_back([&, c] {
        try {
          ok[c] = gw.chat("m", conv).text == conv[0].joined_text() ? 1 : -1;
        } catch (const BackendError&) {
          ok[c] = 0;
        }
      });
    }
    for (auto& t : threads) t.join();

    if (expect.success) {
      for (int v : ok) violations += v != 1;
      violations += echo->calls() != 1;
      violations += faulty->attempts() != static_cast<std::size_t>(expect.attempts);
      violations += sleeps != expect.attempts - 1;
      // Cached: no further backend traffic.
      const auto again = gw.chat("m", conv);
      violations += !again.from_cache;
      violations += faulty->attempts() != static_cast<std::size_t>(expect.attempts);
    } else {
      // Nothing reached the inner backend and the failure was not cached.
      violations += echo->calls() != 0 && callers == 1;
      if (callers == 1) {
        violations += ok[0] != 0;
        violations += faulty->attempts() != static_cast<std::size_t>(expect.attempts);
        violations += gw.backend_calls() != static_cast<std::size_t>(expect.attempts);
      }
      // Later callers may start a fresh attempt sequence; each is bounded.
      violations += faulty->attempts() > static_cast<std::size_t>(callers * (budget + 1));
    }
  }
  return {violations == 0, "1000 random fault schedules, " + std::to_string(violations) +
                               " retry/cache invariant violations"};
}

Outcome stats_reproduction() {
  const StatsReport r = compute_stats(sim::table2_fixture());
  const bool ok = r.total == 1452 && r.per_update_freq.at(UpdateFreq::fast) == 385 &&
                  r.per_update_freq.at(UpdateFreq::slow) == 494 &&
                  r.per_update_freq.at(UpdateFreq::never) == 573 &&
                  r.per_hops.at(Hops::more_than_two) == 387 && r.visual_yes == 865;
  return {ok, "total " + std::to_string(r.total) + ", fast/slow/never " +
                  std::to_string(r.per_update_freq.at(UpdateFreq::fast)) + "/" +
                  std::to_string(r.per_update_freq.at(UpdateFreq::slow)) + "/" +
                  std::to_string(r.per_update_freq.at(UpdateFreq::never)) + ", >2-hop " +
                  std::to_string(r.per_hops.at(Hops::more_than_two)) + ", visual " +
                  std::to_string(r.visual_yes)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"metric oracle", metric_oracle},
      {"expense reproduction", expense_reproduction},
      {"action grammar round trip", grammar_round_trip},
      {"sim ordering", table3_ordering},
      {"multi-hop hardness", multi_hop_hardness},
      {"fast-changing knowledge", fast_changing},
      {"fleiss kappa", kappa_checks},
      {"pearson", pearson_checks},
      {"determinism", determinism},
      {"gateway contracts", gateway_contracts},
      {"stats reproduction", stats_reproduction},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << "AC" << (i + 1) << " " << (o.pass ? "PASS" : "FAIL") << "  " << criteria[i].first
              << ": " << o.detail << std::endl;
  }
  std::cout << (failed ? std::to_string(failed) + " criterion(s) failed" : "all criteria passed")
            << std::endl;
  return failed ? 1 : 0;
}
