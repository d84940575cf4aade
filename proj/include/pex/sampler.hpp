#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pex/backend.hpp"
#include "pex/consistency.hpp"
#include "pex/prompting.hpp"

namespace pex::sampler {

struct ReviewRef {
  std::string id;
  std::string text;
};

// One sampled rationale with its generation provenance.
// (review id, answer, temperature, seed, sample index) identifies a sample
// within a run; sample_index runs across stages.
struct Explanation {
  std::string review_id;
  std::string answer;
  std::string text;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  std::size_t stage_index = 0;
  std::size_t sample_index = 0;
  bool truncated = false;
  std::optional<consistency::ConsistencyScore> score;
};

struct SamplingStage {
  std::size_t count = 0;
  double temperature = 1.0;
};

struct SamplingSchedule {
  std::vector<SamplingStage> stages;  // e.g. {40 @ 1.0, 40 @ 1.2}
  std::uint64_t base_seed = 0;
  std::size_t max_tokens = 256;
};

// Per-sample seed: stable hash of (base seed, review id, answer, stage
// index, index within stage). Stable across partial re-runs.
std::uint64_t sample_seed(const SamplingSchedule& schedule,
                          std::string_view review_id, std::string_view answer,
                          std::size_t stage_index, std::size_t index_in_stage);

// Draws sum(stage counts) explanations for one (review, prediction) pair.
// Duplicated texts are kept: deduplication would distort the sampled
// distribution.
std::vector<Explanation> sample_batch(const LmBackend& backend,
                                      const prompting::TaskSpec& task,
                                      const ReviewRef& review,
                                      std::string_view answer,
                                      const SamplingSchedule& schedule);

// Descending by score value; ties broken by ascending sample index. All
// inputs must carry scores of one variant (and one prompt variant), else
// DomainError. rank is a permutation of its input and idempotent.
std::vector<Explanation> rank(std::vector<Explanation> explanations);

}  // namespace pex::sampler
