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

#include "mrag/kernels.hpp"

#include <omp.h>

namespace mrag::kernels {

namespace {

void check_vectors(const std::vector<std::vector<double>>& vectors) {
  if (vectors.size() < 2) throw Error("pairwise distance needs at least two vectors");
  const std::size_t dim = vectors.front().size();
  for (const auto& v : vectors) {
    if (v.size() != dim) throw Error("embedding dimensions differ");
  }
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

}  // namespace

double mean_pairwise_cosine_distance_serial(const std::vector<std::vector<double>>& vectors) {
  check_vectors(vectors);
  const std::size_t n = vectors.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) total += 1.0 - dot(vectors[i], vectors[j]);
  }
  return total / (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
}

double mean_pairwise_cosine_distance(const std::vector<std::vector<double>>& vectors, int threads) {
  check_vectors(vectors);
  const auto n = static_cast<std::ptrdiff_t>(vectors.size());
  // Per-row partial sums, combined in row order below.
  std::vector<double> rows(vectors.size(), 0.0);
  const int nthreads = threads > 0 ? threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 8) num_threads(nthreads)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::ptrdiff_t j = i + 1; j < n; ++j) s += 1.0 - dot(vectors[i], vectors[j]);
    rows[static_cast<std::size_t>(i)] = s;
  }
  double total = 0.0;
  for (double r : rows) total += r;
  return total / (static_cast<double>(n) * static_cast<double>(n - 1) / 2.0);
}

std::vector<double> f1_recall_batch_serial(std::span<const ScoreJob> jobs, MetricReading reading) {
  std::vector<double> out;
  out.reserve(jobs.size());
  for (const auto& j : jobs) out.push_back(f1_recall(j.prediction, j.gold, j.policy, reading));
  return out;
}

std::vector<double> f1_recall_batch(std::span<const ScoreJob> jobs, MetricReading reading,
                                    int threads) {
  std::vector<double> out(jobs.size(), 0.0);
  parallel_for(jobs.size(), threads, [&](std::size_t i) {
    out[i] = f1_recall(jobs[i].prediction, jobs[i].gold, jobs[i].policy, reading);
  });
  return out;
}

}  // namespace mrag::kernels
