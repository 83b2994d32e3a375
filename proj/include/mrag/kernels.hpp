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

#include <span>
#include <string>
#include <vector>

#include "mrag/evaluation.hpp"
#include "mrag/segment.hpp"

// Hot loops of the harness. Each parallel kernel has a serial reference
// kept for testing and benchmarking; results of the parallel versions do
// not depend on the thread count.
namespace mrag::kernels {

/// Mean over unordered pairs of (1 - dot(u, v)). Requires at least two
/// vectors of equal dimension.
double mean_pairwise_cosine_distance(const std::vector<std::vector<double>>& vectors,
                                     int threads = 0);
double mean_pairwise_cosine_distance_serial(const std::vector<std::vector<double>>& vectors);

struct ScoreJob {
  std::string prediction;
  std::vector<std::string> gold;
  SegmenterPolicy policy;
};

/// f1_recall for every job, in input order.
std::vector<double> f1_recall_batch(std::span<const ScoreJob> jobs,
                                    MetricReading reading = MetricReading::recall_over_gold,
                                    int threads = 0);
std::vector<double> f1_recall_batch_serial(std::span<const ScoreJob> jobs,
                                           MetricReading reading = MetricReading::recall_over_gold);

}  // namespace mrag::kernels
