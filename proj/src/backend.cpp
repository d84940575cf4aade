#include "pex/backend.hpp"

#include <cmath>

#include "pex/errors.hpp"

namespace pex {

double answer_logodds(const LmBackend& backend, std::string_view prompt,
                      std::string_view answer, std::string_view negation,
                      const ScoreOptions& opts) {
  if (answer == negation) {
    throw DomainError("answer_logodds: answer equals its negation");
  }
  const double a = backend.sequence_logprob(prompt, answer, opts).total;
  const double b = backend.sequence_logprob(prompt, negation, opts).total;
  return a - b;
}

AnswerDistribution answer_distribution(const LmBackend& backend,
                                       std::string_view prompt,
                                       std::string_view answer,
                                       std::string_view negation,
                                       const ScoreOptions& opts) {
  if (answer == negation) {
    throw DomainError("answer_distribution: answer equals its negation");
  }
  AnswerDistribution dist;
  dist.labels = {std::string(answer), std::string(negation)};
  dist.logprobs = {backend.sequence_logprob(prompt, answer, opts).total,
                   backend.sequence_logprob(prompt, negation, opts).total};
  for (double lp : dist.logprobs) {
    if (!std::isfinite(lp)) {
      throw DomainError("answer_distribution: non-finite label log-prob");
    }
  }
  return dist;
}

}  // namespace pex
