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

#include "mrag/agent.hpp"

#include <algorithm>

#include "mrag/prompts.hpp"
#include "mrag/sim_models.hpp"

namespace mrag {

std::string_view to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::running: return "running";
    case SessionStatus::answered: return "answered";
    case SessionStatus::step_limit_reached: return "step_limit_reached";
    case SessionStatus::failed: return "failed";
  }
  return "running";
}

SessionStatus session_status_from_string(std::string_view s) {
  for (auto st : {SessionStatus::running, SessionStatus::answered, SessionStatus::step_limit_reached,
                  SessionStatus::failed}) {
    if (s == to_string(st)) return st;
  }
  throw Error("unknown session status '" + std::string(s) + "'");
}

// ---- Trace records ------------------------------------------------------------

CallRecord CallRecord::from_reply(std::string role, const ModelReply& reply, int images) {
  return CallRecord{std::move(role), reply.model_id,  reply.usage,          reply.latency_ms,
                    reply.from_cache, reply.attempts, images, reply.usage_estimated};
}

Json CallRecord::to_json() const {
  return Json{{"role", role},
              {"model_id", model_id},
              {"input_tokens", usage.input_tokens},
              {"output_tokens", usage.output_tokens},
              {"latency_ms", latency_ms},
              {"from_cache", from_cache},
              {"attempts", attempts},
              {"images", images},
              {"usage_estimated", usage_estimated}};
}

CallRecord CallRecord::from_json(const Json& j) {
  CallRecord c;
  c.role = j.at("role").get<std::string>();
  c.model_id = j.at("model_id").get<std::string>();
  c.usage.input_tokens = j.at("input_tokens").get<std::int64_t>();
  c.usage.output_tokens = j.at("output_tokens").get<std::int64_t>();
  c.latency_ms = j.at("latency_ms").get<double>();
  c.from_cache = j.value("from_cache", false);
  c.attempts = j.value("attempts", 0);
  c.images = j.value("images", 0);
  c.usage_estimated = j.value("usage_estimated", false);
  return c;
}

Json action_to_json(const Action& a) {
  if (const auto* s = std::get_if<StepAction>(&a)) {
    return Json{{"kind", "step"},
                {"thought", s->thought},
                {"sub_question", s->sub_question},
                {"tool", std::string(to_string(s->tool))},
                {"query", s->query}};
  }
  const auto& f = std::get<FinalAction>(a);
  return Json{{"kind", "final"}, {"thought", f.thought}, {"answer", f.answer}};
}

Action action_from_json(const Json& j) {
  if (j.at("kind") == "step") {
    auto tool = tool_from_string(j.at("tool").get<std::string>());
    if (!tool) throw Error("trace action with unknown tool");
    return StepAction{j.at("thought").get<std::string>(), j.at("sub_question").get<std::string>(), *tool,
                      j.at("query").get<std::string>()};
  }
  return FinalAction{j.at("thought").get<std::string>(), j.at("answer").get<std::string>()};
}

Json TraceStep::to_json() const {
  Json calls_json = Json::array();
  for (const auto& c : calls) calls_json.push_back(c.to_json());
  Json j{{"index", index},
         {"label", label},
         {"raw_output", raw_output},
         {"calls", std::move(calls_json)},
         {"search_ms", search_ms},
         {"inference_ms", inference_ms},
         {"diagnostics", diagnostics}};
  j["action"] = action ? action_to_json(*action) : Json(nullptr);
  j["evidence"] = evidence ? evidence->to_json() : Json(nullptr);
  j["feedback"] = feedback ? Json(*feedback) : Json(nullptr);
  return j;
}

TraceStep TraceStep::from_json(const Json& j) {
  TraceStep s;
  s.index = j.at("index").get<int>();
  s.label = j.at("label").get<std::string>();
  s.raw_output = j.value("raw_output", "");
  for (const auto& c : j.at("calls")) s.calls.push_back(CallRecord::from_json(c));
  s.search_ms = j.value("search_ms", 0.0);
  s.inference_ms = j.value("inference_ms", 0.0);
  s.diagnostics = j.value("diagnostics", std::vector<std::string>{});
  if (j.contains("action") && !j["action"].is_null()) s.action = action_from_json(j["action"]);
  if (j.contains("evidence") && !j["evidence"].is_null()) s.evidence = EvidenceBundle::from_json(j["evidence"]);
  if (j.contains("feedback") && !j["feedback"].is_null()) s.feedback = j["feedback"].get<std::string>();
  return s;
}

TokenUsage AgentTrace::usage() const {
  TokenUsage u;
  for (const auto& s : steps) {
    for (const auto& c : s.calls) u += c.usage;
  }
  return u;
}

double AgentTrace::search_ms() const {
  double t = 0.0;
  for (const auto& s : steps) t += s.search_ms;
  return t;
}

double AgentTrace::inference_ms() const {
  double t = 0.0;
  for (const auto& s : steps) t += s.inference_ms;
  return t;
}

std::size_t AgentTrace::tool_calls() const {
  return static_cast<std::size_t>(
      std::count_if(steps.begin(), steps.end(), [](const TraceStep& s) { return s.evidence.has_value(); }));
}

std::size_t AgentTrace::step_actions() const {
  return static_cast<std::size_t>(std::count_if(steps.begin(), steps.end(), [](const TraceStep& s) {
    return s.action && std::holds_alternative<StepAction>(*s.action);
  }));
}

std::vector<Json> AgentTrace::to_records() const {
  std::vector<Json> out;
  out.push_back(Json{{"type", "session"},
                     {"session_id", session_id},
                     {"instance_id", instance_id},
                     {"method", method},
                     {"lang", std::string(to_string(lang))},
                     {"prompt_hashes", prompt_hashes}});
  for (const auto& s : steps) {
    Json j = s.to_json();
    j["type"] = "step";
    j["session_id"] = session_id;
    out.push_back(std::move(j));
  }
  const TokenUsage u = usage();
  out.push_back(Json{{"type", "end"},
                     {"session_id", session_id},
                     {"final_answer", final_answer},
                     {"status", std::string(to_string(status))},
                     {"reason", reason},
                     {"input_tokens", u.input_tokens},
                     {"output_tokens", u.output_tokens},
                     {"search_ms", search_ms()},
                     {"inference_ms", inference_ms()},
                     {"tool_calls", tool_calls()}});
  return out;
}

std::vector<AgentTrace> AgentTrace::from_records(const std::vector<Json>& records) {
  std::vector<AgentTrace> out;
  std::map<std::string, std::size_t> index;
  auto get = [&](const std::string& sid) -> AgentTrace& {
    auto it = index.find(sid);
    if (it == index.end()) {
      throw Error("trace record for session '" + sid + "' precedes its session header");
    }
    return out[it->second];
  };
  for (const auto& r : records) {
    const std::string type = r.at("type").get<std::string>();
    const std::string sid = r.at("session_id").get<std::string>();
    if (type == "session") {
      AgentTrace t;
      t.session_id = sid;
      t.instance_id = r.at("instance_id").get<std::string>();
      t.method = r.at("method").get<std::string>();
      t.lang = language_from_string(r.at("lang").get<std::string>());
      t.prompt_hashes = r.value("prompt_hashes", std::map<std::string, std::string>{});
      index[sid] = out.size();
      out.push_back(std::move(t));
    } else if (type == "step") {
      get(sid).steps.push_back(TraceStep::from_json(r));
    } else if (type == "end") {
      AgentTrace& t = get(sid);
      t.final_answer = r.at("final_answer").get<std::string>();
      t.status = session_status_from_string(r.at("status").get<std::string>());
      t.reason = r.value("reason", "");
    } else {
      throw Error("unknown trace record type '" + type + "'");
    }
  }
  return out;
}

// ---- Scripted planner ----------------------------------------------------------------

ScriptedPlanner::ScriptedPlanner(std::shared_ptr<const sim::World> world,
                                 std::vector<sim::SimQuestionPlan> plans)
    : world_(std::move(world)) {
  for (auto& p : plans) plans_.emplace(p.instance_id, std::move(p));
}

namespace {

constexpr const char* kUnknownAnswer = "unknown";

// Case-insensitive de-duplication keeping first occurrences.
std::vector<std::string> distinct(const std::vector<std::string>& values) {
  std::vector<std::string> out;
  for (const auto& v : values) {
    if (std::none_of(out.begin(), out.end(), [&](const std::string& o) { return iequals_ascii(o, v); })) {
      out.push_back(v);
    }
  }
  return out;
}

std::optional<std::string> answer_line(std::string_view feedback) {
  const std::string t = trim(feedback);
  if (t.rfind("Answer:", 0) != 0) return std::nullopt;
  std::string v = trim(std::string_view(t).substr(7, t.find('\n') == std::string::npos
                                                         ? std::string::npos
                                                         : t.find('\n') - 7));
  while (!v.empty() && v.back() == '.') v.pop_back();
  if (v.empty() || iequals_ascii(v, "I don't know")) return std::nullopt;
  return v;
}

}  // namespace

PlannerTurn ScriptedPlanner::next(const SessionState& state, bool forced) {
  auto it = plans_.find(state.instance->id);
  if (it == plans_.end()) throw NoPlanAvailable("no sim plan for instance '" + state.instance->id + "'");
  const sim::SimQuestionPlan& plan = it->second;
  const auto& world = *world_;

  enum class Mode { normal, retry, clarify };
  std::size_t hop = 0;
  std::string subject;
  Mode mode = Mode::normal;
  bool gave_up = false;
  std::vector<std::string> pending;

  auto phrase_of = [&](std::size_t h) -> const std::string& {
    return world.relations()[*world.relation_index(plan.hops[h].relation)].phrase_en;
  };
  auto aliases_of = [&](const std::string& name) {
    std::vector<std::string> names;
    if (auto e = world.entity_by_token(name)) {
      const auto& ent = world.entities()[*e];
      if (!iequals_ascii(ent.name, name)) names.push_back(ent.name);
      for (const auto& a : ent.aliases) {
        if (!iequals_ascii(a, name)) names.push_back(a);
      }
    }
    return names;
  };

  for (std::size_t i = 0; i < state.feedbacks.size() && !gave_up && hop < plan.hops.size(); ++i) {
    const std::string& fb = state.feedbacks[i];
    if (hop == 0) {
      auto name = sim::find_photo_subject(fb);
      if (!name) name = answer_line(fb);
      if (name) {
        subject = *name;
        hop = 1;
        mode = Mode::normal;
      } else {
        gave_up = true;
      }
      continue;
    }
    std::vector<std::string> found = sim::find_fact_values(fb, phrase_of(hop), subject);
    for (const auto& a : aliases_of(subject)) {
      auto more = sim::find_fact_values(fb, phrase_of(hop), a);
      found.insert(found.end(), more.begin(), more.end());
    }
    if (found.empty()) {
      if (auto a = answer_line(fb)) found.push_back(*a);
    }
    const auto values = distinct(found);
    if (mode == Mode::clarify) {
      if (values.empty()) {
        gave_up = true;
      } else {
        subject = values.front();
        ++hop;
        mode = Mode::normal;
      }
    } else if (values.size() > 1) {
      pending = values;
      mode = Mode::clarify;
    } else if (values.size() == 1) {
      subject = values.front();
      ++hop;
      mode = Mode::normal;
    } else if (mode == Mode::normal) {
      mode = Mode::retry;
    } else {
      gave_up = true;
    }
  }

  PlannerTurn turn;
  const bool done = hop >= plan.hops.size();
  if (done || gave_up || forced) {
    FinalAction f;
    if (done) {
      f.thought = "Every sub-question is resolved.";
      f.answer = subject;
    } else if (forced && mode == Mode::clarify && !pending.empty()) {
      f.thought = "Out of steps; taking the first retrieved value.";
      f.answer = pending.front();
    } else {
      f.thought = gave_up ? "The retrieval chain broke off." : "Out of steps before the chain finished.";
      f.answer = kUnknownAnswer;
    }
    turn.action = f;
  } else if (hop == 0) {
    turn.action = StepAction{"First identify the entity shown in the image.",
                             "What entity is shown in this image?", ToolKind::image_search_by_image,
                             "input_image"};
  } else {
    const std::string& phrase = phrase_of(hop);
    const ToolKind tool = plan.hops[hop].tool;
    StepAction s;
    s.tool = tool;
    if (mode == Mode::normal) {
      s.thought = "Next resolve the " + phrase + " of " + subject + ".";
      s.sub_question = "What is the " + phrase + " of " + subject + "?";
      s.query = phrase + " of " + subject;
    } else if (mode == Mode::retry) {
      s.thought = "The last search returned nothing useful; refine the query.";
      s.sub_question = "What is the " + phrase + " of " + subject + "?";
      s.query = phrase + " of " + subject;
      const auto aliases = aliases_of(subject);
      if (aliases.empty()) s.query = "what is the " + s.query;
      for (const auto& a : aliases) s.query += " " + a;
    } else {
      s.thought = "The results disagree about the " + phrase + " of " + subject + "; check which is current.";
      s.sub_question = "Which " + phrase + " of " + subject + " is the most recent?";
      s.query = "latest " + phrase + " of " + subject;
    }
    turn.action = s;
  }
  turn.raw = render_action(turn.action);
  return turn;
}

// ---- Model planner ------------------------------------------------------------------------

ModelPlanner::ModelPlanner(Gateway& gateway, std::string model_id, DecodingParams params)
    : gateway_(gateway), model_id_(std::move(model_id)), params_(params) {}

std::vector<ChatMessage> ModelPlanner::conversation(const SessionState& state, bool forced) const {
  std::vector<ChatMessage> conv;
  conv.push_back(ChatMessage::text(Role::system, prompts::get(prompts::kPlannerSystem)));
  ChatMessage first;
  first.role = Role::user;
  first.parts.emplace_back(state.instance->image);
  first.parts.emplace_back(TextPart{"Question: " + state.question()});
  conv.push_back(std::move(first));
  const std::size_t n = state.raw_outputs.size();
  for (std::size_t i = 0; i < n; ++i) {
    conv.push_back(ChatMessage::text(Role::assistant, state.raw_outputs[i]));
    std::string msg = "Feedback for step " + std::to_string(i + 1) + ":\n" + state.feedbacks[i];
    if (i + 1 == n && state.latest_evidence_text != state.feedbacks[i]) {
      msg += "\nRetrieved content:\n" + state.latest_evidence_text;
    }
    conv.push_back(ChatMessage::user_text(std::move(msg)));
  }
  if (forced) conv.push_back(ChatMessage::user_text(prompts::get(prompts::kPlannerForced)));
  return conv;
}

PlannerTurn ModelPlanner::next(const SessionState& state, bool forced) {
  PlannerTurn turn;
  auto conv = conversation(state, forced);
  const int images = 1;
  ModelReply reply = gateway_.chat(model_id_, conv, params_);
  turn.calls.push_back(CallRecord::from_reply("planner", reply, images));
  try {
    turn.action = parse_action(reply.text, &turn.diagnostics);
    turn.raw = reply.text;
    return turn;
  } catch (const GrammarError& e) {
    turn.diagnostics.push_back(std::string("parse failure: ") + e.what());
    conv.push_back(ChatMessage::text(Role::assistant, reply.text));
    conv.push_back(ChatMessage::user_text(
        render_template(prompts::get(prompts::kPlannerRepair), {{"error", e.what()}})));
  }
  ModelReply repaired = gateway_.chat(model_id_, conv, params_);
  turn.calls.push_back(CallRecord::from_reply("planner", repaired, images));
  try {
    turn.action = parse_action(repaired.text, &turn.diagnostics);
    turn.raw = repaired.text;
    return turn;
  } catch (const GrammarError& e) {
    throw PlannerParseFailure("planner reply unparsable after repair: " + std::string(e.what()));
  }
}

// ---- Solver ---------------------------------------------------------------------------------

SolverResult solve_subquestion(const std::string& question, const std::string& sub_question,
                               const std::string& evidence, ToolKind tool, const ImageRef& image,
                               const SolverConfig& config, Gateway* gateway) {
  SolverResult r;
  if (config.mode == SolverMode::passthrough) {
    r.feedback = evidence;
    return r;
  }
  if (!gateway) throw Error("model solver requires a gateway");
  const bool text_only = tool == ToolKind::web_search && config.text_model_id.has_value();
  const std::string& model = text_only ? *config.text_model_id : config.model_id;
  const std::string prompt =
      render_template(prompts::get(prompts::kSolver),
                      {{"question", config.include_question ? question : "(not provided)"},
                       {"sub_question", sub_question},
                       {"evidence", evidence}});
  ChatMessage msg;
  msg.role = Role::user;
  if (!text_only && tool != ToolKind::web_search) msg.parts.emplace_back(image);
  msg.parts.emplace_back(TextPart{prompt});
  const int images = static_cast<int>(msg.image_count());
  ModelReply reply = gateway->chat(model, {msg});
  r.calls.push_back(CallRecord::from_reply("solver", reply, images));
  r.feedback = config.length_budget ? utf8_clip(reply.text, config.length_budget) : reply.text;
  return r;
}

// ---- Session loop ---------------------------------------------------------------------------

namespace {

double sum_latency(const std::vector<CallRecord>& calls) {
  double t = 0.0;
  for (const auto& c : calls) t += c.latency_ms;
  return t;
}

}  // namespace

SessionResult run_session(const VqaInstance& instance, Language lang, Planner& planner,
                          Toolbox& toolbox, const SolverConfig& solver, Gateway* solver_gateway,
                          const SessionLimits& limits, const std::string& method) {
  SessionResult result;
  AgentTrace& trace = result.trace;
  trace.session_id = session_id_for(instance.id, lang);
  trace.instance_id = instance.id;
  trace.method = method;
  trace.lang = lang;
  for (const char* name : {prompts::kPlannerSystem, prompts::kPlannerRepair, prompts::kPlannerForced,
                           prompts::kSolver}) {
    trace.prompt_hashes[name] = prompts::hash(name);
  }

  SessionState state;
  state.instance = &instance;
  state.lang = lang;
  std::map<std::string, ImageRef> slots = {{"input_image", instance.image}};

  auto finish = [&](SessionStatus status, std::string answer, std::string reason) {
    trace.status = status;
    trace.final_answer = std::move(answer);
    trace.reason = std::move(reason);
    result.answer = trace.final_answer;
  };

  auto take_turn = [&](bool forced) -> std::optional<Action> {
    TraceStep step;
    step.index = static_cast<int>(trace.steps.size());
    step.label = forced ? "forced" : "plan";
    PlannerTurn turn;
    try {
      turn = planner.next(state, forced);
    } catch (const PlannerParseFailure& e) {
      step.diagnostics.push_back(e.what());
      trace.steps.push_back(std::move(step));
      finish(SessionStatus::failed, "", std::string("planner parse failure: ") + e.what());
      return std::nullopt;
    } catch (const BackendError& e) {
      step.diagnostics.push_back(e.what());
      trace.steps.push_back(std::move(step));
      finish(SessionStatus::failed, "", std::string("backend error: ") + e.what());
      return std::nullopt;
    }
    step.raw_output = turn.raw;
    step.action = turn.action;
    step.calls = std::move(turn.calls);
    step.diagnostics = std::move(turn.diagnostics);
    step.inference_ms = sum_latency(step.calls);

    if (const auto* s = std::get_if<StepAction>(&turn.action); s && !forced) {
      EvidenceBundle bundle;
      try {
        bundle = toolbox.dispatch(s->tool, s->query, limits.k, slots);
      } catch (const ToolboxError& e) {
        bundle.tool = s->tool;
        bundle.query = s->query;
        bundle.k_requested = limits.k;
        step.diagnostics.push_back(std::string("tool error: ") + e.what());
      } catch (const BackendError& e) {
        step.diagnostics.push_back(e.what());
        trace.steps.push_back(std::move(step));
        finish(SessionStatus::failed, "", std::string("search backend error: ") + e.what());
        return std::nullopt;
      }
      for (const auto& h : bundle.hits) {
        if (const auto* img = std::get_if<ImageHit>(&h)) slots.emplace(image_slot_id(img->image), img->image);
      }
      const std::string text = format_evidence(bundle, limits.parts, limits.evidence_budget);
      SolverResult solved;
      try {
        solved = solve_subquestion(instance.question(lang), s->sub_question, text, s->tool, instance.image,
                                   solver, solver_gateway);
      } catch (const BackendError& e) {
        step.diagnostics.push_back(e.what());
        step.evidence = bundle;
        step.search_ms = bundle.latency_ms;
        trace.steps.push_back(std::move(step));
        finish(SessionStatus::failed, "", std::string("solver backend error: ") + e.what());
        return std::nullopt;
      }
      step.search_ms = bundle.latency_ms;
      step.inference_ms += sum_latency(solved.calls);
      step.calls.insert(step.calls.end(), solved.calls.begin(), solved.calls.end());
      step.evidence = bundle;
      step.feedback = solved.feedback;

      state.raw_outputs.push_back(turn.raw);
      state.actions.push_back(*s);
      state.evidence.push_back(std::move(bundle));
      state.feedbacks.push_back(solved.feedback);
      state.latest_evidence_text = text;
      ++state.step;
    }
    trace.steps.push_back(std::move(step));
    return turn.action;
  };

  for (int i = 0; i < limits.max_steps; ++i) {
    auto action = take_turn(false);
    if (!action) return result;
    if (const auto* f = std::get_if<FinalAction>(&*action)) {
      finish(SessionStatus::answered, f->answer, "final answer");
      return result;
    }
  }
  auto action = take_turn(true);
  if (!action) return result;
  if (const auto* f = std::get_if<FinalAction>(&*action)) {
    finish(SessionStatus::step_limit_reached, f->answer, "step limit reached; forced answer");
  } else {
    trace.steps.back().diagnostics.push_back("forced turn returned a retrieval step; not executed");
    finish(SessionStatus::step_limit_reached, "", "step limit reached; no final answer");
  }
  return result;
}

}  // namespace mrag
