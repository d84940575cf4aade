#include "pex/sampler.hpp"

#include <algorithm>

#include "pex/errors.hpp"
#include "pex/rng.hpp"

namespace pex::sampler {

std::uint64_t sample_seed(const SamplingSchedule& schedule,
                          std::string_view review_id, std::string_view answer,
                          std::size_t stage_index, std::size_t index_in_stage) {
  return stable_hash(schedule.base_seed, std::string(review_id),
                     std::string(answer), stage_index, index_in_stage);
}

std::vector<Explanation> sample_batch(const LmBackend& backend,
                                      const prompting::TaskSpec& task,
                                      const ReviewRef& review,
                                      std::string_view answer,
                                      const SamplingSchedule& schedule) {
  if (!backend.capabilities().can_sample) {
    throw DomainError("backend cannot sample");
  }
  if (!task.is_label(answer)) {
    throw DomainError("unknown answer label: " + std::string(answer));
  }
  if (schedule.stages.empty()) {
    throw DomainError("sampling schedule has no stages");
  }
  for (const SamplingStage& stage : schedule.stages) {
    if (stage.count == 0) throw DomainError("sampling stage count must be positive");
    if (stage.temperature <= 0.0) {
      throw DomainError("sampling stage temperature must be positive");
    }
  }

  const std::string prompt =
      prompting::render_explain_prompt(task, review.text, answer);
  std::vector<Explanation> out;
  std::size_t global_index = 0;
  for (std::size_t s = 0; s < schedule.stages.size(); ++s) {
    const SamplingStage& stage = schedule.stages[s];
    for (std::size_t i = 0; i < stage.count; ++i, ++global_index) {
      Explanation e;
      e.review_id = review.id;
      e.answer = std::string(answer);
      e.temperature = stage.temperature;
      e.stage_index = s;
      e.sample_index = global_index;
      e.seed = sample_seed(schedule, review.id, answer, s, i);
      const SampleResult sampled =
          backend.sample(prompt, stage.temperature, e.seed, schedule.max_tokens);
      e.text = sampled.text;
      e.truncated = sampled.truncated;
      out.push_back(std::move(e));
    }
  }
  return out;
}

std::vector<Explanation> rank(std::vector<Explanation> explanations) {
  if (explanations.empty()) return explanations;
  for (const Explanation& e : explanations) {
    if (!e.score.has_value()) {
      throw DomainError("rank: explanation without a consistency score");
    }
    if (e.score->variant != explanations.front().score->variant ||
        e.score->prompt_variant != explanations.front().score->prompt_variant) {
      throw DomainError("rank: mixed score variants");
    }
  }
  std::sort(explanations.begin(), explanations.end(),
            [](const Explanation& a, const Explanation& b) {
              if (a.score->value != b.score->value) {
                return a.score->value > b.score->value;
              }
              return a.sample_index < b.sample_index;
            });
  return explanations;
}

}  // namespace pex::sampler
