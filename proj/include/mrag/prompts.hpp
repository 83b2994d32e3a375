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
#include <string>

namespace mrag::prompts {

// Asset names are the file stems under assets/prompts.
inline constexpr const char* kPlannerSystem = "planner_system_v1";
inline constexpr const char* kPlannerRepair = "planner_repair_v1";
inline constexpr const char* kPlannerForced = "planner_forced_v1";
inline constexpr const char* kSolver = "solver_v1";
inline constexpr const char* kBaselineAnswer = "baseline_answer_v1";
inline constexpr const char* kCaption = "caption_v1";
inline constexpr const char* kUpdateJudge = "update_judge_v1";
inline constexpr const char* kAccuracyJudge = "accuracy_judge_v1";

const std::map<std::string, std::string>& all_assets();

/// Throws mrag::Error for an unknown asset name.
const std::string& get(const std::string& name);

/// SHA-256 of the asset bytes.
std::string hash(const std::string& name);

}  // namespace mrag::prompts
