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

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mrag/action_grammar.hpp"
#include "mrag/dataset.hpp"
#include "mrag/gateway.hpp"
#include "mrag/simworld.hpp"
#include "mrag/toolbox.hpp"

namespace mrag {

enum class SessionStatus { running, answered, step_limit_reached, failed };

std::string_view to_string(SessionStatus s);
SessionStatus session_status_from_string(std::string_view s);

/// One gateway call as seen by a session.
struct CallRecord {
  std::string role;  // planner, solver, answer, caption, judge
  std::string model_id;
  TokenUsage usage;
  double latency_ms = 0.0;
  bool from_cache = false;
  int attempts = 0;
  int images = 0;
  bool usage_estimated = false;

  static CallRecord from_reply(std::string role, const ModelReply& reply, int images);
  Json to_json() const;
  static CallRecord from_json(const Json& j);
  bool operator==(const CallRecord&) const = default;
};

Json action_to_json(const Action& a);
Action action_from_json(const Json& j);

struct TraceStep {
  int index = 0;
  /// plan / forced for agent turns; the stage name for fixed pipelines.
  std::string label;
  std::string raw_output;
  std::optional<Action> action;
  std::optional<EvidenceBundle> evidence;
  std::optional<std::string> feedback;
  std::vector<CallRecord> calls;
  double search_ms = 0.0;
  double inference_ms = 0.0;
  std::vector<std::string> diagnostics;

  Json to_json() const;
  static TraceStep from_json(const Json& j);
  bool operator==(const TraceStep&) const = default;
};

struct AgentTrace {
  std::string session_id;
  std::string instance_id;
  std::string method;
  Language lang = Language::en;
  std::map<std::string, std::string> prompt_hashes;
  std::vector<TraceStep> steps;
  std::string final_answer;
  SessionStatus status = SessionStatus::running;
  std::string reason;

  TokenUsage usage() const;
  double search_ms() const;
  double inference_ms() const;
  std::size_t tool_calls() const;
  std::size_t step_actions() const;

  /// Line records: one session header, one record per step, one end record.
  std::vector<Json> to_records() const;
  /// Groups records by session (in order of first appearance).
  static std::vector<AgentTrace> from_records(const std::vector<Json>& records);
  bool operator==(const AgentTrace&) const = default;
};

inline std::string session_id_for(const std::string& instance_id, Language lang) {
  return instance_id + ":" + std::string(to_string(lang));
}

struct SessionLimits {
  int max_steps = 6;
  ContentParts parts;
  int k = kDefaultTopK;
  std::size_t evidence_budget = 4000;
};

/// Everything a planner may look at.
struct SessionState {
  const VqaInstance* instance = nullptr;
  Language lang = Language::en;
  int step = 0;
  std::vector<std::string> raw_outputs;  // planner replies for completed steps
  std::vector<StepAction> actions;
  std::vector<EvidenceBundle> evidence;
  std::vector<std::string> feedbacks;
  std::string latest_evidence_text;
  SessionStatus status = SessionStatus::running;

  const std::string& question() const { return instance->question(lang); }
};

struct PlannerTurn {
  Action action;
  std::string raw;
  std::vector<CallRecord> calls;
  std::vector<std::string> diagnostics;
};

class PlannerParseFailure : public Error {
 public:
  using Error::Error;
};

class NoPlanAvailable : public Error {
 public:
  using Error::Error;
};

class Planner {
 public:
  virtual ~Planner() = default;
  /// `forced` asks for a final answer now (step limit reached).
  virtual PlannerTurn next(const SessionState& state, bool forced) = 0;
};

/// Deterministic planner for sim instances. Replays the session so far
/// against the instance's plan: identify the image, ask each hop with the
/// previous answer substituted, re-query once with an alias-expanded query
/// when a hop yields nothing, ask for the latest value when results
/// conflict, then answer.
class ScriptedPlanner : public Planner {
 public:
  ScriptedPlanner(std::shared_ptr<const sim::World> world, std::vector<sim::SimQuestionPlan> plans);
  PlannerTurn next(const SessionState& state, bool forced) override;

 private:
  std::shared_ptr<const sim::World> world_;
  std::map<std::string, sim::SimQuestionPlan> plans_;
};

/// Planner backed by a chat model through the gateway. One repair turn on
/// an unparsable reply, then PlannerParseFailure.
class ModelPlanner : public Planner {
 public:
  ModelPlanner(Gateway& gateway, std::string model_id, DecodingParams params = {});
  PlannerTurn next(const SessionState& state, bool forced) override;

  /// Planner-visible conversation for `state` (before any repair turn).
  std::vector<ChatMessage> conversation(const SessionState& state, bool forced) const;

 private:
  Gateway& gateway_;
  std::string model_id_;
  DecodingParams params_;
};

enum class SolverMode { passthrough, model };

struct SolverConfig {
  SolverMode mode = SolverMode::passthrough;
  std::string model_id;
  /// Text-only model for web_search sub-questions; never sent images.
  std::optional<std::string> text_model_id;
  std::size_t length_budget = 600;
  bool include_question = true;
};

struct SolverResult {
  std::string feedback;
  std::vector<CallRecord> calls;
};

/// Passthrough returns the evidence text unchanged; model mode asks the
/// solver model and clips its reply to the length budget.
SolverResult solve_subquestion(const std::string& question, const std::string& sub_question,
                               const std::string& evidence, ToolKind tool, const ImageRef& image,
                               const SolverConfig& config, Gateway* gateway);

struct SessionResult {
  std::string answer;
  AgentTrace trace;
};

/// Runs the plan/retrieve/solve loop for one question.
SessionResult run_session(const VqaInstance& instance, Language lang, Planner& planner,
                          Toolbox& toolbox, const SolverConfig& solver, Gateway* solver_gateway,
                          const SessionLimits& limits, const std::string& method = "omnisearch");

}  // namespace mrag
