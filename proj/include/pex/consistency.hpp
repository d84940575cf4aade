#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "pex/backend.hpp"
#include "pex/io.hpp"
#include "pex/prompting.hpp"

namespace pex::consistency {

// Weight-of-evidence thresholds, in nats. The scoring convention throughout
// is natural log; these thresholds are meaningful only in that base.
inline constexpr double kConsistentThreshold = 2.0;
inline constexpr double kInconsistentThreshold = 0.0;

enum class Variant { sequence, adjusted };
enum class Verdict { consistent, indeterminate, inconsistent };

std::string_view variant_name(Variant v);
Variant variant_from_name(std::string_view name);
std::string_view verdict_name(Verdict v);

// Signed log-odds consistency value with its component breakdown:
// value == lhs - rhs.
//   sequence: lhs/rhs are log P(e | Q(q,a)) and log P(e | Q(q,~a))
//   adjusted: lhs/rhs are the posterior and prior answer log-odds
struct ConsistencyScore {
  double value = 0.0;
  Variant variant = Variant::adjusted;
  std::string prompt_variant = "default";
  double lhs = 0.0;
  double rhs = 0.0;
};

// Sequence-ratio consistency: how much more likely the backend is to
// generate `explanation` when prompted with `answer` than with its negation.
// Explanations are scored as complete sequences (terminator included).
ConsistencyScore pex_sequence(const LmBackend& backend,
                              const prompting::TaskSpec& task,
                              std::string_view review, std::string_view answer,
                              std::string_view explanation,
                              const ScoreOptions& opts = {});

// Adjusted consistency: posterior answer log-odds given the explanation
// (via the Q' prompt) minus the prior answer log-odds.
ConsistencyScore pex_adjusted(const LmBackend& backend,
                              const prompting::TaskSpec& task,
                              std::string_view review, std::string_view answer,
                              std::string_view explanation,
                              const prompting::PromptVariant& variant,
                              const ScoreOptions& opts = {});

// value > 2 -> consistent, value < 0 -> inconsistent, otherwise
// indeterminate (both inequalities strict). Non-finite -> DomainError.
Verdict classify(const ConsistencyScore& score);

// One line of the scored-explanation JSONL stream. For sequence-variant
// records the posterior/prior fields carry the two sequence log-probs
// (the lhs/rhs breakdown), keeping one schema for both variants.
struct ScoredRecord {
  std::string review_id;
  std::string answer;
  std::string explanation;
  std::string variant;
  std::string prompt_variant;
  double score = 0.0;
  double posterior_logodds = 0.0;
  double prior_logodds = 0.0;
  std::string backend_id;
  std::string timestamp;
  Json extra;  // sampling metadata carried through the pipeline

  Json to_json() const;
  static ScoredRecord from_json(const Json& j);
};

}  // namespace pex::consistency
