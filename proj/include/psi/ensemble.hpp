#pragma once

#include <algorithm>
#include <array>
#include <optional>
#include <string>
#include <vector>

#include "psi/common.hpp"
#include "psi/llm_gateway.hpp"
#include "psi/prompts.hpp"

namespace psi {

enum class EnsembleMethod { LlmIntegration, Vote };

inline std::string to_string(EnsembleMethod m) { return m == EnsembleMethod::LlmIntegration ? "llm" : "vote"; }

struct EnsembleDecision {
  std::string comment_id;
  Direction label = Direction::NotRelated;
  EnsembleMethod method = EnsembleMethod::Vote;
  std::vector<ModelJudgment> inputs;
  std::optional<std::string> integrator_model_id;
};

struct UnintegrableReply : ParseError {
  explicit UnintegrableReply(const std::string& raw) : ParseError("integrator reply carries no label: \"" + raw + "\"") {}
};

/// Stable first: a tie signals disagreement, so prefer the no-movement labels.
inline const std::vector<Direction>& default_vote_priority() {
  static const std::vector<Direction> p{Direction::Stable, Direction::NotRelated, Direction::Rise, Direction::Fall};
  return p;
}

/// Confidence-weighted vote. Each judgment adds its confidence (100 when
/// absent) to its label; the largest total wins and ties follow `priority`.
inline EnsembleDecision integrate_vote(const std::vector<ModelJudgment>& judgments,
                                       const std::vector<Direction>& priority = default_vote_priority(),
                                       std::string comment_id = {}) {
  if (judgments.empty()) throw PreconditionError("integrate_vote: no judgments");
  std::array<long long, 4> totals{};
  for (const auto& j : judgments) {
    if (!j.direction) throw PreconditionError("integrate_vote: judgment without a direction label");
    totals[static_cast<std::size_t>(*j.direction)] += j.confidence.value_or(100);
  }
  auto rank = [&](Direction d) {
    auto it = std::find(priority.begin(), priority.end(), d);
    return it == priority.end() ? priority.size() + static_cast<std::size_t>(d) : static_cast<std::size_t>(it - priority.begin());
  };
  std::optional<Direction> best;
  for (Direction d : kAllDirections) {
    bool present = std::any_of(judgments.begin(), judgments.end(), [&](const auto& j) { return j.direction == d; });
    if (!present) continue;
    auto t = totals[static_cast<std::size_t>(d)];
    auto bt = best ? totals[static_cast<std::size_t>(*best)] : -1;
    if (!best || t > bt || (t == bt && rank(d) < rank(*best))) best = d;
  }
  return EnsembleDecision{std::move(comment_id), *best, EnsembleMethod::Vote, judgments, std::nullopt};
}

/// Prompt for one integration call.
inline ChatRequest integration_request(const std::string& comment_text, const std::vector<ModelJudgment>& judgments,
                                       const DecodingParams& params,
                                       const PromptLanguage& lang = PromptLanguage::english()) {
  return ChatRequest{"", build_integration_prompt(comment_text, judgments, lang), params};
}

/// Turns an integrator reply into a decision.
inline EnsembleDecision decision_from_reply(const std::string& reply, std::string comment_id,
                                            const std::vector<ModelJudgment>& judgments,
                                            const std::string& integrator_id,
                                            const PromptLanguage& lang = PromptLanguage::english()) {
  ModelJudgment parsed;
  try {
    parsed = parse_judgment(reply, PromptTask::Integration, integrator_id, lang);
  } catch (const NoLabelFound&) {
    throw UnintegrableReply(reply);
  }
  return EnsembleDecision{std::move(comment_id), *parsed.direction, EnsembleMethod::LlmIntegration, judgments,
                          integrator_id};
}

/// One integrator call for one comment. Transport errors propagate.
inline EnsembleDecision integrate_llm(const std::string& comment_id, const std::string& comment_text,
                                      const std::vector<ModelJudgment>& judgments, ChatClient& integrator,
                                      const std::string& integrator_id, const DecodingParams& params = {},
                                      const PromptLanguage& lang = PromptLanguage::english()) {
  auto req = integration_request(comment_text, judgments, params, lang);
  return decision_from_reply(integrator.complete(req), comment_id, judgments, integrator_id, lang);
}

inline json decision_to_json(const EnsembleDecision& d) {
  json inputs = json::array();
  for (const auto& j : d.inputs) {
    inputs.push_back({{"model_id", j.model_id},
                      {"label", j.direction ? to_string(*j.direction) : std::string()},
                      {"confidence", j.confidence ? json(*j.confidence) : json(nullptr)}});
  }
  return json{{"comment_id", d.comment_id},
              {"label", to_string(d.label)},
              {"method", to_string(d.method)},
              {"integrator_model_id", d.integrator_model_id ? json(*d.integrator_model_id) : json(nullptr)},
              {"inputs", inputs}};
}

}  // namespace psi
