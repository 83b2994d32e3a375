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

// Serial versus OpenMP timings for the parallel kernels.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include <omp.h>

#include "mrag/kernels.hpp"

namespace {

template <typename F>
double time_ms(F&& f, int reps) {
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) f();
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count() /
         reps;
}

std::vector<std::vector<double>> random_unit_vectors(std::size_t n, std::size_t dim,
                                                     std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::vector<std::vector<double>> out(n, std::vector<double>(dim));
  for (auto& v : out) {
    double norm = 0.0;
    for (auto& x : v) {
      x = g(rng);
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
  }
  return out;
}

std::vector<mrag::kernels::ScoreJob> random_jobs(std::size_t n, std::mt19937_64& rng) {
  static const char* words[] = {"red",  "blue",  "city", "river", "coach", "mayor", "north",
                                "club", "tower", "green", "old",  "new",   "bridge", "park"};
  std::uniform_int_distribution<int> pick(0, 13), len(1, 8);
  auto phrase = [&] {
    std::string s;
    for (int i = len(rng); i > 0; --i) s += std::string(s.empty() ? "" : " ") + words[pick(rng)];
    return s;
  };
  std::vector<mrag::kernels::ScoreJob> jobs(n);
  for (auto& j : jobs) {
    j.prediction = phrase();
    j.gold = {phrase(), phrase()};
  }
  return jobs;
}

}  // namespace

int main(int argc, char** argv) {
  const std::size_t n = argc > 1 ? std::stoul(argv[1]) : 1500;
  const int threads = omp_get_max_threads();
  std::mt19937_64 rng(7);

  const auto vecs = random_unit_vectors(n, 256, rng);
  double a = 0.0, b = 0.0;
  const double serial = time_ms([&] { a = mrag::kernels::mean_pairwise_cosine_distance_serial(vecs); }, 3);
  const double parallel =
      time_ms([&] { b = mrag::kernels::mean_pairwise_cosine_distance(vecs, threads); }, 3);
  std::printf("pairwise_cosine n=%zu dim=256 serial=%.2fms openmp(%d)=%.2fms speedup=%.2fx diff=%.3g\n",
              n, serial, threads, parallel, serial / parallel, std::abs(a - b));

  const auto jobs = random_jobs(n * 40, rng);
  std::vector<double> sa, sb;
  const double s2 = time_ms([&] { sa = mrag::kernels::f1_recall_batch_serial(jobs); }, 3);
  const double p2 = time_ms([&] { sb = mrag::kernels::f1_recall_batch(jobs, mrag::MetricReading::recall_over_gold, threads); }, 3);
  std::printf("f1_recall_batch n=%zu serial=%.2fms openmp(%d)=%.2fms speedup=%.2fx equal=%s\n",
              jobs.size(), s2, threads, p2, s2 / p2, sa == sb ? "yes" : "no");
  return 0;
}
