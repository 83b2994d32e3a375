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

#include "mrag/baselines.hpp"

#include "mrag/prompts.hpp"

namespace mrag {

std::string_view to_string(PipelineKind k) {
  switch (k) {
    case PipelineKind::no_retrieval: return "no_retrieval";
    case PipelineKind::single_hop_image: return "single_hop_image";
    case PipelineKind::single_hop_web: return "single_hop_web";
    case PipelineKind::two_step_retrieved_caption: return "two_step_retrieved_caption";
    case PipelineKind::two_step_caption_model: return "two_step_caption_model";
    case PipelineKind::golden_query_upper_bound: return "golden_query_upper_bound";
  }
  return "no_retrieval";
}

const std::array<PipelineKind, 6>& all_pipelines() {
  static const std::array<PipelineKind, 6> kinds = {
      PipelineKind::no_retrieval,           PipelineKind::single_hop_image,
      PipelineKind::single_hop_web,         PipelineKind::two_step_retrieved_caption,
      PipelineKind::two_step_caption_model, PipelineKind::golden_query_upper_bound};
  return kinds;
}

std::optional<PipelineKind> pipeline_from_string(std::string_view s) {
  for (auto k : all_pipelines()) {
    if (s == to_string(k)) return k;
  }
  return std::nullopt;
}

std::string extract_answer(std::string_view reply) {
  std::string t = trim(reply);
  if (auto nl = t.find('\n'); nl != std::string::npos) t = trim(t.substr(0, nl));
  if (t.size() >= 7 && iequals_ascii(std::string_view(t).substr(0, 7), "answer:")) t = trim(t.substr(7));
  return t;
}

namespace {

class PipelineRun {
 public:
  PipelineRun(PipelineKind kind, const VqaInstance& instance, Language lang, Gateway& gateway,
              Toolbox& toolbox, const PipelineConfig& config)
      : instance_(instance), lang_(lang), gateway_(gateway), toolbox_(toolbox), config_(config) {
    trace_.session_id = session_id_for(instance.id, lang);
    trace_.instance_id = instance.id;
    trace_.method = std::string(to_string(kind));
    trace_.lang = lang;
    for (const char* name : {prompts::kBaselineAnswer, prompts::kCaption}) {
      trace_.prompt_hashes[name] = prompts::hash(name);
    }
  }

  const std::string& question() const { return instance_.question(lang_); }

  EvidenceBundle search(const std::string& label, ToolKind tool, const std::string& query) {
    TraceStep step;
    step.index = static_cast<int>(trace_.steps.size());
    step.label = label;
    EvidenceBundle b;
    switch (tool) {
      case ToolKind::web_search: b = toolbox_.web_search(query, config_.k); break;
      case ToolKind::image_search_by_text: b = toolbox_.image_search_by_text(query, config_.k); break;
      case ToolKind::image_search_by_image: b = toolbox_.image_search_by_image(instance_.image, config_.k); break;
    }
    step.search_ms = b.latency_ms;
    step.evidence = b;
    trace_.steps.push_back(std::move(step));
    return b;
  }

  std::string call(const std::string& label, const std::string& role, const std::string& model,
                   const std::string& prompt) {
    ChatMessage msg;
    msg.role = Role::user;
    msg.parts.emplace_back(instance_.image);
    msg.parts.emplace_back(TextPart{prompt});
    ModelReply reply = gateway_.chat(model, {msg});
    TraceStep step;
    step.index = static_cast<int>(trace_.steps.size());
    step.label = label;
    step.raw_output = reply.text;
    step.calls.push_back(CallRecord::from_reply(role, reply, 1));
    step.inference_ms = reply.latency_ms;
    trace_.steps.push_back(std::move(step));
    return reply.text;
  }

  std::string format(const EvidenceBundle& b) const {
    return format_evidence(b, config_.parts, config_.evidence_budget);
  }

  std::string answer(const std::string& evidence) {
    const std::string prompt = render_template(prompts::get(prompts::kBaselineAnswer),
                                               {{"question", question()}, {"evidence", evidence}});
    return extract_answer(call("answer", "answer", config_.answer_model, prompt));
  }

  PipelineResult finish(std::string prediction, SessionStatus status, std::string reason) {
    trace_.final_answer = prediction;
    trace_.status = status;
    trace_.reason = std::move(reason);
    return PipelineResult{std::move(prediction), std::move(trace_)};
  }

  const VqaInstance& instance_;
  Language lang_;
  Gateway& gateway_;
  Toolbox& toolbox_;
  const PipelineConfig& config_;
  AgentTrace trace_;
};

std::string joined_query(const std::string& caption, const std::string& question) {
  const std::string c = trim(caption);
  return c.empty() ? question : c + " " + question;
}

}  // namespace

PipelineResult run_pipeline(PipelineKind kind, const VqaInstance& instance, Language lang,
                            Gateway& gateway, Toolbox& toolbox, const PipelineConfig& config) {
  if (kind == PipelineKind::golden_query_upper_bound && trim(instance.golden_query).empty()) {
    throw MissingGoldenQuery("instance '" + instance.id + "' has no golden query");
  }
  PipelineRun run(kind, instance, lang, gateway, toolbox, config);
  try {
    std::string prediction;
    switch (kind) {
      case PipelineKind::no_retrieval:
        prediction = run.answer("(none)");
        break;
      case PipelineKind::single_hop_image: {
        auto b = run.search("image_search", ToolKind::image_search_by_image, "input_image");
        prediction = run.answer(run.format(b));
        break;
      }
      case PipelineKind::single_hop_web: {
        auto b = run.search("web_search", ToolKind::web_search, run.question());
        prediction = run.answer(run.format(b));
        break;
      }
      case PipelineKind::two_step_retrieved_caption: {
        auto img = run.search("image_search", ToolKind::image_search_by_image, "input_image");
        std::string caption;
        if (!img.hits.empty()) caption = std::get<ImageHit>(img.hits.front()).caption;
        auto web = run.search("web_search", ToolKind::web_search, joined_query(caption, run.question()));
        prediction = run.answer(run.format(img) + "\n" + run.format(web));
        break;
      }
      case PipelineKind::two_step_caption_model: {
        const std::string caption =
            run.call("caption", "caption", config.caption_model, prompts::get(prompts::kCaption));
        auto web = run.search("web_search", ToolKind::web_search, joined_query(caption, run.question()));
        prediction = run.answer(run.format(web));
        break;
      }
      case PipelineKind::golden_query_upper_bound: {
        const ToolKind tool =
            instance.needs_external_visual ? ToolKind::image_search_by_text : ToolKind::web_search;
        auto b = run.search(std::string(to_string(tool)), tool, instance.golden_query);
        prediction = run.answer(run.format(b));
        break;
      }
    }
    return run.finish(std::move(prediction), SessionStatus::answered, "pipeline complete");
  } catch (const BackendError& e) {
    return run.finish("", SessionStatus::failed, std::string("backend error: ") + e.what());
  } catch (const ToolboxError& e) {
    return run.finish("", SessionStatus::failed, std::string("tool error: ") + e.what());
  }
}

}  // namespace mrag
