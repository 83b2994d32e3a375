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

#include "mrag/sim_models.hpp"

#include <algorithm>
#include <cctype>

#include "mrag/segment.hpp"

namespace mrag::sim {

namespace {

// Value of the first line starting with `label`, if any.
std::optional<std::string> line_value(std::string_view text, std::string_view label) {
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    if (line.substr(0, label.size()) == label) return trim(line.substr(label.size()));
    pos = nl + 1;
  }
  return std::nullopt;
}

// Text following the first line equal to `label` up to the next line in
// `stops` (or the end).
std::string block_after(std::string_view text, std::string_view label,
                        std::initializer_list<std::string_view> stops = {}) {
  std::size_t p = text.find(label);
  if (p == std::string_view::npos) return "";
  p += label.size();
  std::size_t end = text.size();
  for (auto s : stops) {
    std::size_t q = text.find(s, p);
    if (q != std::string_view::npos) end = std::min(end, q);
  }
  return std::string(text.substr(p, end - p));
}

std::string last_user_text(const ChatRequest& request) {
  for (auto it = request.conversation.rbegin(); it != request.conversation.rend(); ++it) {
    if (it->role == Role::user) return it->joined_text();
  }
  return "";
}

BackendResponse respond(const ChatRequest& request, std::string text, const SimInferenceLatency& lat) {
  TokenUsage usage;
  for (const auto& m : request.conversation) usage.input_tokens += estimate_tokens(m.joined_text());
  usage.output_tokens = estimate_tokens(text);
  const double ms = lat.base_ms + lat.per_input_token_ms * static_cast<double>(usage.input_tokens) +
                    lat.per_output_token_ms * static_cast<double>(usage.output_tokens);
  return BackendResponse{std::move(text), usage, ms};
}

bool is_word_byte(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '-' || c == '_' ||
         (static_cast<unsigned char>(c) & 0x80) != 0;
}

}  // namespace

std::optional<int> outermost_relation(const World& world, std::string_view question) {
  const std::string lower = to_lower_ascii(question);
  const bool zh = contains_han(question);
  std::optional<int> best;
  std::size_t best_pos = 0;
  for (std::size_t i = 0; i < world.relations().size(); ++i) {
    const auto& r = world.relations()[i];
    std::size_t pos;
    if (zh) {
      pos = lower.rfind(r.phrase_zh);
      if (pos == std::string::npos) continue;
      if (!best || pos > best_pos) best = static_cast<int>(i), best_pos = pos;
    } else {
      pos = lower.find(r.phrase_en);
      if (pos == std::string::npos) continue;
      if (!best || pos < best_pos) best = static_cast<int>(i), best_pos = pos;
    }
  }
  return best;
}

std::vector<std::string> find_fact_values(std::string_view text, std::string_view phrase,
                                          std::string_view subject) {
  std::vector<std::string> out;
  const std::string lower = to_lower_ascii(text);
  const std::string needle = "the " + to_lower_ascii(phrase) + " of ";
  const std::string subj = to_lower_ascii(subject);
  for (std::size_t p = lower.find(needle); p != std::string::npos; p = lower.find(needle, p + 1)) {
    if (p > 0 && is_word_byte(lower[p - 1])) continue;
    std::size_t s = p + needle.size();
    std::size_t e = s;
    while (e < lower.size() && is_word_byte(lower[e])) ++e;
    if (e == s) continue;
    if (!subj.empty() && lower.compare(s, e - s, subj) != 0) continue;
    if (lower.compare(e, 4, " is ") != 0) continue;
    std::size_t v = e + 4;
    std::size_t ve = v;
    while (ve < text.size() && text[ve] != '.' && text[ve] != '\n') ++ve;
    std::string value = trim(text.substr(v, ve - v));
    if (!value.empty()) out.push_back(std::move(value));
  }
  return out;
}

std::optional<std::string> find_photo_subject(std::string_view text) {
  static constexpr std::string_view kLead = "Photo of ";
  for (std::size_t p = text.find(kLead); p != std::string_view::npos; p = text.find(kLead, p + 1)) {
    std::size_t s = p + kLead.size();
    std::size_t e = s;
    while (e < text.size() && is_word_byte(text[e])) ++e;
    if (e > s && e < text.size() && text[e] == '.') return std::string(text.substr(s, e - s));
  }
  return std::nullopt;
}

BackendResponse SimReaderBackend::complete(const ChatRequest& request) {
  const std::string prompt = last_user_text(request);
  std::string question = line_value(prompt, "Sub-question:").value_or("");
  if (question.empty()) question = line_value(prompt, "Question:").value_or(prompt);
  std::string evidence = block_after(prompt, "Retrieved knowledge:\n", {"\nReply with"});
  if (evidence.empty()) evidence = block_after(prompt, "Retrieved content:\n", {"\nStart your reply"});

  std::string answer = "I don't know";
  if (auto r = outermost_relation(*world_, question)) {
    auto values = find_fact_values(evidence, world_->relations()[*r].phrase_en);
    if (!values.empty()) answer = values.front();
  } else if (auto name = find_photo_subject(evidence)) {
    answer = *name;  // identification question
  }
  return respond(request, "Answer: " + answer, latency_);
}

BackendResponse SimCaptionerBackend::complete(const ChatRequest& request) {
  std::string caption = "A photo of a landmark.";
  for (const auto& m : request.conversation) {
    for (const auto& part : m.parts) {
      const auto* img = std::get_if<ImageRef>(&part);
      if (!img) continue;
      std::optional<std::string> hash = img->content_hash;
      if (!hash) {
        try {
          hash = sha256_hex(world_->image_bytes(img->locator));
        } catch (const Error&) {
          continue;
        }
      }
      if (auto e = world_->entity_for_image_hash(*hash)) {
        const Entity& ent = world_->entities()[*e];
        if (ent.famous) caption = "Photo of " + ent.name + ".";
      }
      return respond(request, caption, latency_);
    }
  }
  return respond(request, caption, latency_);
}

BackendResponse SimJudgeBackend::complete(const ChatRequest& request) {
  const std::string prompt = last_user_text(request);
  if (auto original = line_value(prompt, "Original answer:")) {
    const std::string query = line_value(prompt, "Search query:").value_or("");
    const std::string evidence = block_after(prompt, "Retrieved knowledge:\n", {"\nGive a short rationale"});
    std::vector<std::string> values;
    const std::size_t of = query.rfind(" of ");
    if (of != std::string::npos) {
      values = find_fact_values(evidence, query.substr(0, of), trim(query.substr(of + 4)));
    }
    if (values.empty()) return respond(request, "No retrieved fact addresses the question.\nUNCERTAIN", latency_);
    for (const auto& v : values) {
      if (!iequals_ascii(v, *original)) {
        return respond(request, "Retrieved knowledge states " + v + ".\nNEEDS_UPDATE", latency_);
      }
    }
    return respond(request, "Retrieved knowledge agrees with the original answer.\nUNCHANGED", latency_);
  }
  const std::string prediction = to_lower_ascii(line_value(prompt, "Model prediction:").value_or(""));
  const std::string gold = block_after(prompt, "Ground-truth answers:\n", {"\nModel prediction:"});
  bool correct = false;
  std::size_t pos = 0;
  while (pos < gold.size()) {
    std::size_t nl = gold.find('\n', pos);
    if (nl == std::string::npos) nl = gold.size();
    std::string g = to_lower_ascii(trim(std::string_view(gold).substr(pos, nl - pos)));
    if (g.rfind("- ", 0) == 0) g = g.substr(2);
    if (!g.empty() && prediction.find(g) != std::string::npos) correct = true;
    pos = nl + 1;
  }
  return respond(request, correct ? "CORRECT" : "INCORRECT", latency_);
}

std::shared_ptr<ModelRouter> make_sim_router(std::shared_ptr<const World> world) {
  auto router = std::make_shared<ModelRouter>();
  router->add(kSimReaderModel, std::make_shared<SimReaderBackend>(world));
  router->add(kSimCaptionerModel, std::make_shared<SimCaptionerBackend>(world));
  router->add(kSimJudgeModel, std::make_shared<SimJudgeBackend>(world));
  return router;
}

}  // namespace mrag::sim
