#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace pex {

// Per-token teacher-forced continuation scores, natural log everywhere.
struct ScoredSequence {
  std::vector<std::string> tokens;
  std::vector<double> token_logprobs;  // each <= 0
  double total = 0.0;                  // sum of token_logprobs
};

// Log-probabilities of the two task answers rendered as continuations.
struct AnswerDistribution {
  std::array<std::string, 2> labels;
  std::array<double, 2> logprobs;
};

struct SampleResult {
  std::string text;
  bool truncated = false;  // max_tokens reached before the terminator
};

struct ScoreOptions {
  // Score zero-probability tokens/labels as log(1e-300) instead of raising
  // a domain error. Off by default: silent -inf propagation corrupts ranks.
  bool allow_zero = false;
  // Treat the continuation as a complete sequence: include the terminator
  // factor after its last token. Used for explanation likelihoods; label
  // continuations are scored as prefixes (flag off).
  bool treat_as_complete = false;
};

enum class BackendKind { tabular, remote, softmax_toy };

struct Capabilities {
  bool can_score = false;
  bool can_sample = false;
  bool can_enumerate = false;
};

// Uniform contract over language models: teacher-forced continuation
// scoring, restricted answer distributions, and sampling. Implementations
// are immutable after construction and safe to share across threads; all
// operations are pure with respect to backend state.
class LmBackend {
 public:
  virtual ~LmBackend() = default;

  virtual BackendKind kind() const = 0;
  virtual Capabilities capabilities() const = 0;
  virtual std::string id() const = 0;

  // Per-token conditional log-probs of `continuation` under teacher forcing.
  // Precondition: can_score, continuation nonempty after tokenization.
  virtual ScoredSequence sequence_logprob(std::string_view prompt,
                                          std::string_view continuation,
                                          const ScoreOptions& opts = {}) const = 0;

  // Temperature-scaled sampling. Tabular and softmax-toy backends are
  // deterministic given (seed, prompt, temperature).
  virtual SampleResult sample(std::string_view prompt, double temperature,
                              std::uint64_t seed,
                              std::size_t max_tokens) const = 0;
};

// log M(answer | prompt) - log M(negation | prompt), each term scored as a
// full word sequence via sequence_logprob (labels may be multi-token).
double answer_logodds(const LmBackend& backend, std::string_view prompt,
                      std::string_view answer, std::string_view negation,
                      const ScoreOptions& opts = {});

AnswerDistribution answer_distribution(const LmBackend& backend,
                                       std::string_view prompt,
                                       std::string_view answer,
                                       std::string_view negation,
                                       const ScoreOptions& opts = {});

// Floor used when allow_zero smoothing is on.
inline constexpr double kZeroProbabilityFloor = 1e-300;

}  // namespace pex
