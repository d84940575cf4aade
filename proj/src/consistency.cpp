#include "pex/consistency.hpp"

#include <cmath>

#include "pex/errors.hpp"

namespace pex::consistency {

std::string_view variant_name(Variant v) {
  return v == Variant::sequence ? "sequence" : "adjusted";
}

Variant variant_from_name(std::string_view name) {
  if (name == "sequence") return Variant::sequence;
  if (name == "adjusted") return Variant::adjusted;
  throw DomainError("unknown consistency variant: " + std::string(name));
}

std::string_view verdict_name(Verdict v) {
  switch (v) {
    case Verdict::consistent:
      return "Consistent";
    case Verdict::inconsistent:
      return "Inconsistent";
    case Verdict::indeterminate:
      return "Indeterminate";
  }
  return "Indeterminate";
}

ConsistencyScore pex_sequence(const LmBackend& backend,
                              const prompting::TaskSpec& task,
                              std::string_view review, std::string_view answer,
                              std::string_view explanation,
                              const ScoreOptions& opts) {
  if (!task.is_label(answer)) {
    throw DomainError("unknown answer label: " + std::string(answer));
  }
  const std::string& negation = task.other_label(answer);
  ScoreOptions seq_opts = opts;
  seq_opts.treat_as_complete = true;

  ConsistencyScore score;
  score.variant = Variant::sequence;
  score.prompt_variant = "default";
  score.lhs = backend
                  .sequence_logprob(
                      prompting::render_explain_prompt(task, review, answer),
                      explanation, seq_opts)
                  .total;
  score.rhs = backend
                  .sequence_logprob(
                      prompting::render_explain_prompt(task, review, negation),
                      explanation, seq_opts)
                  .total;
  score.value = score.lhs - score.rhs;
  return score;
}

ConsistencyScore pex_adjusted(const LmBackend& backend,
                              const prompting::TaskSpec& task,
                              std::string_view review, std::string_view answer,
                              std::string_view explanation,
                              const prompting::PromptVariant& variant,
                              const ScoreOptions& opts) {
  if (!task.is_label(answer)) {
    throw DomainError("unknown answer label: " + std::string(answer));
  }
  const std::string& negation = task.other_label(answer);

  ConsistencyScore score;
  score.variant = Variant::adjusted;
  score.prompt_variant = variant.id;
  score.lhs = answer_logodds(
      backend, prompting::render_adjusted_prompt(variant, review, explanation),
      answer, negation, opts);
  score.rhs = answer_logodds(backend,
                             prompting::render_prior_prompt(task, review),
                             answer, negation, opts);
  score.value = score.lhs - score.rhs;
  return score;
}

Verdict classify(const ConsistencyScore& score) {
  if (!std::isfinite(score.value)) {
    throw DomainError("classify: non-finite consistency score");
  }
  if (score.value > kConsistentThreshold) return Verdict::consistent;
  if (score.value < kInconsistentThreshold) return Verdict::inconsistent;
  return Verdict::indeterminate;
}

Json ScoredRecord::to_json() const {
  Json j = extra.is_object() ? extra : Json::object();
  j["review_id"] = review_id;
  j["answer"] = answer;
  j["explanation"] = explanation;
  j["variant"] = variant;
  j["prompt_variant"] = prompt_variant;
  j["score"] = score;
  j["posterior_logodds"] = posterior_logodds;
  j["prior_logodds"] = prior_logodds;
  j["backend_id"] = backend_id;
  j["timestamp"] = timestamp;
  return j;
}

ScoredRecord ScoredRecord::from_json(const Json& j) {
  ScoredRecord rec;
  rec.review_id = j.at("review_id").get<std::string>();
  rec.answer = j.at("answer").get<std::string>();
  rec.explanation = j.at("explanation").get<std::string>();
  rec.variant = j.at("variant").get<std::string>();
  rec.prompt_variant = j.at("prompt_variant").get<std::string>();
  rec.score = j.at("score").get<double>();
  rec.posterior_logodds = j.at("posterior_logodds").get<double>();
  rec.prior_logodds = j.at("prior_logodds").get<double>();
  rec.backend_id = j.at("backend_id").get<std::string>();
  rec.timestamp = j.at("timestamp").get<std::string>();
  rec.extra = Json::object();
  for (const auto& [key, value] : j.items()) {
    static const char* known[] = {"review_id",  "answer",
                                  "explanation", "variant",
                                  "prompt_variant", "score",
                                  "posterior_logodds", "prior_logodds",
                                  "backend_id", "timestamp"};
    bool is_known = false;
    for (const char* k : known) {
      if (key == k) {
        is_known = true;
        break;
      }
    }
    if (!is_known) rec.extra[key] = value;
  }
  return rec;
}

}  // namespace pex::consistency
