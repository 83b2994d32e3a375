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

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mrag/gateway.hpp"
#include "mrag/simworld.hpp"

// Rule-based chat backends over a sim world, standing in for the multimodal
// answer model, the caption model and the judge.
namespace mrag::sim {

inline constexpr const char* kSimReaderModel = "sim-mllm";
inline constexpr const char* kSimCaptionerModel = "sim-captioner";
inline constexpr const char* kSimJudgeModel = "sim-judge";

struct SimInferenceLatency {
  double base_ms = 600.0;
  double per_input_token_ms = 0.5;
  double per_output_token_ms = 25.0;
};

/// Relation mentioned outermost in a question: the first English phrase
/// occurrence, or the last Chinese one.
std::optional<int> outermost_relation(const World& world, std::string_view question);

/// Values Y of sentences "the <phrase> of <subject> is Y." in `text`, in order
/// of appearance. An empty subject matches any subject.
std::vector<std::string> find_fact_values(std::string_view text, std::string_view phrase,
                                          std::string_view subject = {});

/// Entity name from the first "Photo of X." in `text`.
std::optional<std::string> find_photo_subject(std::string_view text);

/// Reads the question (or sub-question) and the retrieved knowledge from the
/// prompt and answers "Answer: Y" from the first matching fact sentence, or
/// "Answer: I don't know".
class SimReaderBackend : public ChatBackend {
 public:
  explicit SimReaderBackend(std::shared_ptr<const World> world, SimInferenceLatency latency = {})
      : world_(std::move(world)), latency_(latency) {}
  BackendResponse complete(const ChatRequest& request) override;

 private:
  std::shared_ptr<const World> world_;
  SimInferenceLatency latency_;
};

/// Names the entity in the first image part when it is famous.
class SimCaptionerBackend : public ChatBackend {
 public:
  explicit SimCaptionerBackend(std::shared_ptr<const World> world, SimInferenceLatency latency = {})
      : world_(std::move(world)), latency_(latency) {}
  BackendResponse complete(const ChatRequest& request) override;

 private:
  std::shared_ptr<const World> world_;
  SimInferenceLatency latency_;
};

/// Answers both judge prompts: update checks (UNCHANGED when every retrieved
/// value equals the original answer, NEEDS_UPDATE when one differs,
/// UNCERTAIN without evidence) and accuracy (CORRECT when a gold answer
/// occurs in the prediction).
class SimJudgeBackend : public ChatBackend {
 public:
  explicit SimJudgeBackend(std::shared_ptr<const World> world, SimInferenceLatency latency = {})
      : world_(std::move(world)), latency_(latency) {}
  BackendResponse complete(const ChatRequest& request) override;

 private:
  std::shared_ptr<const World> world_;
  SimInferenceLatency latency_;
};

/// Router with the three sim models bound to their ids.
std::shared_ptr<ModelRouter> make_sim_router(std::shared_ptr<const World> world);

}  // namespace mrag::sim
