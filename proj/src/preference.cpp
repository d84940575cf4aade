#include "pex/preference.hpp"

#include <algorithm>
#include <cmath>

#include "pex/errors.hpp"
#include "pex/io.hpp"
#include "pex/rng.hpp"

namespace pex::preference {

void validate_policy(const SelectionPolicy& policy) {
  if (policy.top_fraction <= 0.0 || policy.top_fraction > 0.5 ||
      policy.bottom_fraction <= 0.0 || policy.bottom_fraction > 0.5) {
    throw DomainError("selection fractions must lie in (0, 0.5]");
  }
  if (policy.pairs_per_example < 1) {
    throw DomainError("pairs_per_example must be at least 1");
  }
}

PoolSplit select_pools(std::span<const sampler::Explanation> ranked,
                       const SelectionPolicy& policy) {
  validate_policy(policy);
  if (ranked.empty()) throw DomainError("select_pools: empty ranked list");
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    if (!ranked[i].score.has_value()) {
      throw DomainError("select_pools: unscored explanation");
    }
    if (i > 0 && ranked[i - 1].score->value < ranked[i].score->value) {
      throw DomainError("select_pools: list is not ranked descending");
    }
  }

  const std::size_t n = ranked.size();
  auto pool_size = [n](double fraction) {
    return static_cast<std::size_t>(
        std::ceil(fraction * static_cast<double>(n)));
  };
  std::size_t top_k = pool_size(policy.top_fraction);
  std::size_t bottom_k = pool_size(policy.bottom_fraction);

  PoolSplit split;
  if (top_k + bottom_k > n) {
    top_k = bottom_k = n / 2;
    split.truncated_overlap = true;
  }
  split.top.assign(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(top_k));
  split.bottom.assign(ranked.end() - static_cast<std::ptrdiff_t>(bottom_k),
                      ranked.end());
  return split;
}

std::vector<PreferencePair> build_pairs(const PoolSplit& pools,
                                        const prompting::TaskSpec& task,
                                        const sampler::ReviewRef& review,
                                        std::string_view answer,
                                        const SelectionPolicy& policy) {
  validate_policy(policy);

  // Eligible combinations in deterministic (top index, bottom index) order.
  std::vector<std::pair<std::size_t, std::size_t>> eligible;
  for (std::size_t i = 0; i < pools.top.size(); ++i) {
    for (std::size_t j = 0; j < pools.bottom.size(); ++j) {
      const double cw = pools.top[i].score->value;
      const double cl = pools.bottom[j].score->value;
      if (!(cw > cl)) continue;
      if (pools.top[i].text == pools.bottom[j].text) continue;
      if (policy.zero_straddle && !(cw > 0.0 && cl < 0.0)) continue;
      eligible.emplace_back(i, j);
    }
  }
  if (eligible.empty()) return {};

  Rng rng = make_rng(stable_hash(policy.seed, review.id, std::string(answer),
                                 "pairs"));
  stable_shuffle(eligible, rng);

  const std::size_t take = std::min<std::size_t>(policy.pairs_per_example,
                                                 eligible.size());
  const std::string prompt =
      prompting::render_explain_prompt(task, review.text, answer);
  std::vector<PreferencePair> pairs;
  pairs.reserve(take);
  for (std::size_t k = 0; k < take; ++k) {
    const auto [i, j] = eligible[k];
    PreferencePair pair;
    pair.prompt = prompt;
    pair.chosen = pools.top[i].text;
    pair.rejected = pools.bottom[j].text;
    pair.chosen_score = pools.top[i].score->value;
    pair.rejected_score = pools.bottom[j].score->value;
    pair.review_id = review.id;
    pair.answer = std::string(answer);
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

void emit_dataset(std::span<const PreferencePair> pairs,
                  const std::filesystem::path& jsonl_path,
                  const std::filesystem::path& manifest_path,
                  const SelectionPolicy& policy,
                  std::span<const std::string> source_run_ids) {
  for (const PreferencePair& pair : pairs) {
    if (!(pair.chosen_score > pair.rejected_score)) {
      throw DomainError("preference pair violates chosen > rejected score");
    }
    if (pair.chosen == pair.rejected) {
      throw DomainError("preference pair has identical texts");
    }
    if (policy.zero_straddle &&
        !(pair.chosen_score > 0.0 && pair.rejected_score < 0.0)) {
      throw DomainError("preference pair violates the zero-straddle filter");
    }
  }

  std::vector<Json> lines;
  lines.reserve(pairs.size());
  for (const PreferencePair& pair : pairs) {
    lines.push_back(Json{{"prompt", pair.prompt},
                         {"chosen", pair.chosen},
                         {"rejected", pair.rejected}});
  }
  write_jsonl(jsonl_path, lines);

  std::map<std::string, std::size_t> per_example;
  for (const PreferencePair& pair : pairs) {
    ++per_example[pair.review_id + "|" + pair.answer];
  }
  Json manifest;
  manifest["policy"] = {{"top_fraction", policy.top_fraction},
                        {"bottom_fraction", policy.bottom_fraction},
                        {"pairs_per_example", policy.pairs_per_example},
                        {"zero_straddle", policy.zero_straddle},
                        {"seed", policy.seed}};
  manifest["pair_count"] = pairs.size();
  manifest["example_count"] = per_example.size();
  manifest["pairs_per_example_counts"] = per_example;
  manifest["source_run_ids"] = std::vector<std::string>(source_run_ids.begin(),
                                                        source_run_ids.end());
  atomic_write_file(manifest_path, manifest.dump(2) + "\n");
}

std::vector<PreferencePair> read_dataset(const std::filesystem::path& jsonl_path) {
  std::vector<PreferencePair> pairs;
  for (const Json& j : read_jsonl(jsonl_path)) {
    PreferencePair pair;
    pair.prompt = j.at("prompt").get<std::string>();
    pair.chosen = j.at("chosen").get<std::string>();
    pair.rejected = j.at("rejected").get<std::string>();
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

}  // namespace pex::preference
