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

#include "mrag/dataset_update.hpp"

#include "mrag/prompts.hpp"

namespace mrag {

std::string_view to_string(UpdateVerdict v) {
  switch (v) {
    case UpdateVerdict::unchanged: return "unchanged";
    case UpdateVerdict::needs_update: return "needs_update";
    case UpdateVerdict::uncertain: return "uncertain";
  }
  return "uncertain";
}

UpdateVerdict update_verdict_from_string(std::string_view s) {
  for (auto v : {UpdateVerdict::unchanged, UpdateVerdict::needs_update, UpdateVerdict::uncertain}) {
    if (iequals_ascii(s, to_string(v))) return v;
  }
  throw Error("unknown update verdict '" + std::string(s) + "'");
}

Json ReviewQueueEntry::to_json() const {
  return Json{{"instance_id", instance_id},
              {"evidence_summary", evidence_summary},
              {"verdict", std::string(to_string(verdict))},
              {"rationale", rationale},
              {"timestamp", timestamp},
              {"unparsable", unparsable}};
}

ReviewQueueEntry ReviewQueueEntry::from_json(const Json& j) {
  ReviewQueueEntry e;
  e.instance_id = j.at("instance_id").get<std::string>();
  e.evidence_summary = j.at("evidence_summary").get<std::string>();
  e.verdict = update_verdict_from_string(j.at("verdict").get<std::string>());
  e.rationale = j.value("rationale", "");
  e.timestamp = j.value("timestamp", "");
  e.unparsable = j.value("unparsable", false);
  return e;
}

std::optional<UpdateVerdict> parse_update_verdict(std::string_view reply) {
  std::string t = trim(reply);
  if (auto nl = t.rfind('\n'); nl != std::string::npos) t = trim(t.substr(nl + 1));
  if (t.size() >= 8 && iequals_ascii(std::string_view(t).substr(0, 8), "verdict:")) t = trim(t.substr(8));
  while (!t.empty() && t.back() == '.') t.pop_back();
  if (iequals_ascii(t, "UNCHANGED")) return UpdateVerdict::unchanged;
  if (iequals_ascii(t, "NEEDS_UPDATE")) return UpdateVerdict::needs_update;
  if (iequals_ascii(t, "UNCERTAIN")) return UpdateVerdict::uncertain;
  return std::nullopt;
}

std::vector<ReviewQueueEntry> update_check(const Dataset& dataset, Toolbox& search, Gateway& judge,
                                           const std::string& judge_model,
                                           const UpdateCheckConfig& config) {
  std::vector<ReviewQueueEntry> entries(dataset.size());
  parallel_for(dataset.size(), config.threads, [&](std::size_t i) {
    const VqaInstance& inst = dataset[i];
    try {
      const EvidenceBundle bundle = search.web_search(inst.golden_query, config.k);
      const std::string evidence = format_evidence(bundle, config.parts, config.evidence_budget);
      std::string answers;
      for (const auto& a : inst.answers) answers += (answers.empty() ? "" : " / ") + a;
      const std::string prompt = render_template(
          prompts::get(prompts::kUpdateJudge),
          {{"question", inst.question_en.empty() ? inst.question_zh : inst.question_en},
           {"query", inst.golden_query},
           {"answer", inst.answers.front()},
           {"evidence", evidence}});
      const ModelReply reply = judge.chat(judge_model, {ChatMessage::user_text(prompt)});
      ReviewQueueEntry& e = entries[i];
      e.instance_id = inst.id;
      e.evidence_summary = evidence;
      e.rationale = trim(reply.text);
      e.timestamp = bundle.retrieved_at;
      if (auto v = parse_update_verdict(reply.text)) {
        e.verdict = *v;
      } else {
        e.verdict = UpdateVerdict::uncertain;
        e.unparsable = true;
      }
    } catch (const BackendError& err) {
      throw BackendError(err.kind(), "update check for instance '" + inst.id + "': " + err.what());
    }
  });
  return entries;
}

}  // namespace mrag
