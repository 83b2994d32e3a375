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

#include <optional>
#include <string>
#include <vector>

#include "mrag/dataset.hpp"
#include "mrag/gateway.hpp"
#include "mrag/toolbox.hpp"

namespace mrag {

enum class UpdateVerdict { unchanged, needs_update, uncertain };

std::string_view to_string(UpdateVerdict v);
UpdateVerdict update_verdict_from_string(std::string_view s);

struct ReviewQueueEntry {
  std::string instance_id;
  std::string evidence_summary;
  UpdateVerdict verdict = UpdateVerdict::uncertain;
  std::string rationale;
  std::string timestamp;
  bool unparsable = false;

  Json to_json() const;
  static ReviewQueueEntry from_json(const Json& j);
};

/// Final-line verdict token of a judge reply: UNCHANGED, NEEDS_UPDATE or
/// UNCERTAIN (case-insensitive, optional "verdict:" lead and trailing '.').
std::optional<UpdateVerdict> parse_update_verdict(std::string_view reply);

struct UpdateCheckConfig {
  int k = kDefaultTopK;
  ContentParts parts;
  std::size_t evidence_budget = 4000;
  int threads = 1;
};

/// Searches the web with each instance's golden query and asks the judge
/// whether the recorded answer needs updating. One entry per instance, in
/// dataset order. Backend errors propagate with the instance id attached.
std::vector<ReviewQueueEntry> update_check(const Dataset& dataset, Toolbox& search, Gateway& judge,
                                           const std::string& judge_model,
                                           const UpdateCheckConfig& config = {});

}  // namespace mrag
