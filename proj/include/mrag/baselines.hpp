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

#include <array>
#include <optional>
#include <string>

#include "mrag/agent.hpp"
#include "mrag/gateway.hpp"
#include "mrag/toolbox.hpp"

namespace mrag {

enum class PipelineKind {
  no_retrieval,
  single_hop_image,
  single_hop_web,
  two_step_retrieved_caption,
  two_step_caption_model,
  golden_query_upper_bound,
};

std::string_view to_string(PipelineKind k);
std::optional<PipelineKind> pipeline_from_string(std::string_view s);
const std::array<PipelineKind, 6>& all_pipelines();

class MissingGoldenQuery : public Error {
 public:
  using Error::Error;
};

struct PipelineConfig {
  int k = kDefaultTopK;
  ContentParts parts;
  std::size_t evidence_budget = 4000;
  std::string answer_model = "sim-mllm";
  std::string caption_model = "sim-captioner";
};

struct PipelineResult {
  std::string prediction;
  AgentTrace trace;
};

/// The answer text of a model reply: first line, without an "Answer:" lead.
std::string extract_answer(std::string_view reply);

/// Runs one fixed retrieval pipeline. Backend errors end the session with
/// status failed and an empty prediction.
PipelineResult run_pipeline(PipelineKind kind, const VqaInstance& instance, Language lang,
                            Gateway& gateway, Toolbox& toolbox, const PipelineConfig& config);

}  // namespace mrag
