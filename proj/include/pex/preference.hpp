#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pex/prompting.hpp"
#include "pex/sampler.hpp"

namespace pex::preference {

// Pool-selection and pairing rules for preference-dataset construction.
struct SelectionPolicy {
  double top_fraction = 0.10;
  double bottom_fraction = 0.10;
  std::size_t pairs_per_example = 8;
  bool zero_straddle = true;  // keep only pairs with chosen > 0 > rejected
  std::uint64_t seed = 0;
};

void validate_policy(const SelectionPolicy& policy);

// One DPO training example. Invariants: chosen_score > rejected_score,
// chosen != rejected, and with the zero-straddle filter
// chosen_score > 0 > rejected_score.
struct PreferencePair {
  std::string prompt;  // Q(q, a)
  std::string chosen;
  std::string rejected;
  double chosen_score = 0.0;
  double rejected_score = 0.0;
  std::string review_id;
  std::string answer;
};

struct PoolSplit {
  std::vector<sampler::Explanation> top;
  std::vector<sampler::Explanation> bottom;
  bool truncated_overlap = false;  // pools shrunk to disjoint halves
};

// First ceil(p*n) and last ceil(p*n) items of one (review, answer) ranked
// list. Overlapping pools are truncated to disjoint halves and flagged.
PoolSplit select_pools(std::span<const sampler::Explanation> ranked,
                       const SelectionPolicy& policy);

// Up to pairs_per_example distinct (top, bottom) combinations drawn
// uniformly without replacement with a seed derived from
// (policy seed, review id, answer). The eligibility filter runs before
// sampling; an empty eligible set yields an empty list.
std::vector<PreferencePair> build_pairs(const PoolSplit& pools,
                                        const prompting::TaskSpec& task,
                                        const sampler::ReviewRef& review,
                                        std::string_view answer,
                                        const SelectionPolicy& policy);

// JSONL with {"prompt", "chosen", "rejected"} per line plus a sidecar
// manifest (policy, seed, counts, source run ids). Pairs are validated
// against the PreferencePair invariants before writing.
void emit_dataset(std::span<const PreferencePair> pairs,
                  const std::filesystem::path& jsonl_path,
                  const std::filesystem::path& manifest_path,
                  const SelectionPolicy& policy,
                  std::span<const std::string> source_run_ids);

std::vector<PreferencePair> read_dataset(const std::filesystem::path& jsonl_path);

}  // namespace pex::preference
