#include <doctest.h>

#include <algorithm>
#include <set>

#include "pex/consistency.hpp"
#include "pex/errors.hpp"
#include "pex/sampler.hpp"
#include "pex/tabular_lm.hpp"
#include "support/oracles.hpp"

using namespace pex;
using namespace pex::sampler;

namespace {

Explanation scored_explanation(double value, std::size_t sample_index,
                               std::string_view variant_id = "default") {
  Explanation e;
  e.review_id = "r";
  e.answer = "Truthful";
  e.text = "text " + std::to_string(sample_index);
  e.sample_index = sample_index;
  consistency::ConsistencyScore score;
  score.value = value;
  score.variant = consistency::Variant::adjusted;
  score.prompt_variant = std::string(variant_id);
  e.score = score;
  return e;
}

const ReviewRef kReview{"q1", "the pool was amazing and staff kind"};

}  // namespace

TEST_CASE("a two-stage schedule yields the sum of stage counts") {
  const TabularLm lm(testing::canonical_fixture());
  SamplingSchedule schedule;
  schedule.stages = {{40, 1.0}, {40, 1.2}};
  schedule.base_seed = 5;
  const auto batch = sample_batch(lm, lm.task(), kReview, "Truthful", schedule);
  REQUIRE(batch.size() == 80);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    CHECK(batch[i].sample_index == i);
    CHECK(batch[i].temperature == (i < 40 ? 1.0 : 1.2));
    CHECK(batch[i].stage_index == (i < 40 ? 0 : 1));
    CHECK_FALSE(batch[i].text.empty());
  }
  // Distinct per-sample seeds.
  std::set<std::uint64_t> seeds;
  for (const Explanation& e : batch) seeds.insert(e.seed);
  CHECK(seeds.size() == batch.size());
}

TEST_CASE("single-sample schedule is deterministic across runs") {
  const TabularLm lm(testing::canonical_fixture());
  SamplingSchedule schedule;
  schedule.stages = {{1, 1.0}};
  schedule.base_seed = 123;
  const auto first = sample_batch(lm, lm.task(), kReview, "Truthful", schedule);
  const auto second = sample_batch(lm, lm.task(), kReview, "Truthful", schedule);
  REQUIRE(first.size() == 1);
  CHECK(first[0].text == second[0].text);
  CHECK(first[0].seed == second[0].seed);
}

TEST_CASE("invalid schedules are rejected") {
  const TabularLm lm(testing::canonical_fixture());
  SamplingSchedule zero_count;
  zero_count.stages = {{0, 1.0}};
  CHECK_THROWS_AS(sample_batch(lm, lm.task(), kReview, "Truthful", zero_count),
                  DomainError);
  SamplingSchedule bad_temp;
  bad_temp.stages = {{4, 0.0}};
  CHECK_THROWS_AS(sample_batch(lm, lm.task(), kReview, "Truthful", bad_temp),
                  DomainError);
  SamplingSchedule empty;
  CHECK_THROWS_AS(sample_batch(lm, lm.task(), kReview, "Truthful", empty),
                  DomainError);
  SamplingSchedule fine;
  fine.stages = {{1, 1.0}};
  CHECK_THROWS_AS(sample_batch(lm, lm.task(), kReview, "Unknown", fine),
                  DomainError);
}

TEST_CASE("rank sorts descending by score") {
  std::vector<Explanation> list = {scored_explanation(1.0, 0),
                                   scored_explanation(3.0, 1),
                                   scored_explanation(-2.0, 2)};
  const auto ranked = rank(list);
  REQUIRE(ranked.size() == 3);
  CHECK(ranked[0].score->value == 3.0);
  CHECK(ranked[1].score->value == 1.0);
  CHECK(ranked[2].score->value == -2.0);
}

TEST_CASE("ties break by ascending sample index") {
  std::vector<Explanation> list = {scored_explanation(2.0, 3),
                                   scored_explanation(2.0, 1)};
  const auto ranked = rank(list);
  CHECK(ranked[0].sample_index == 1);
  CHECK(ranked[1].sample_index == 3);
}

TEST_CASE("top of an 80-sample ranking matches a linear-scan oracle") {
  Rng rng = make_rng(88);
  std::vector<Explanation> list;
  for (std::size_t i = 0; i < 80; ++i) {
    list.push_back(scored_explanation(uniform01(rng) * 10.0 - 5.0, i));
  }
  double best = list[0].score->value;
  for (const Explanation& e : list) best = std::max(best, e.score->value);
  const auto ranked = rank(list);
  CHECK(ranked.front().score->value == best);
}

TEST_CASE("rank is a permutation and idempotent") {
  Rng rng = make_rng(99);
  std::vector<Explanation> list;
  for (std::size_t i = 0; i < 40; ++i) {
    list.push_back(scored_explanation(static_cast<double>(bounded(rng, 6)), i));
  }
  const auto ranked = rank(list);
  REQUIRE(ranked.size() == list.size());
  std::set<std::size_t> seen;
  for (const Explanation& e : ranked) seen.insert(e.sample_index);
  CHECK(seen.size() == list.size());

  const auto twice = rank(ranked);
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    CHECK(twice[i].sample_index == ranked[i].sample_index);
  }
}

TEST_CASE("mixed score variants cannot be ranked together") {
  std::vector<Explanation> list = {scored_explanation(1.0, 0),
                                   scored_explanation(2.0, 1)};
  list[1].score->variant = consistency::Variant::sequence;
  CHECK_THROWS_AS(rank(list), DomainError);

  std::vector<Explanation> mixed_prompt = {scored_explanation(1.0, 0, "V1"),
                                           scored_explanation(2.0, 1, "V2")};
  CHECK_THROWS_AS(rank(mixed_prompt), DomainError);

  std::vector<Explanation> unscored = {scored_explanation(1.0, 0)};
  unscored.push_back(Explanation{});
  CHECK_THROWS_AS(rank(unscored), DomainError);
}

TEST_CASE("sample, score, rank reproduces byte-identical records") {
  const TabularLm lm(testing::canonical_fixture());
  const prompting::PromptVariant variant =
      prompting::find_variant(prompting::builtin_variants(), "default");

  const auto run_once = [&] {
    SamplingSchedule schedule;
    schedule.stages = {{12, 1.0}, {12, 1.2}};
    schedule.base_seed = 7;
    auto batch = sample_batch(lm, lm.task(), kReview, "Truthful", schedule);
    for (Explanation& e : batch) {
      e.score = consistency::pex_adjusted(lm, lm.task(), kReview.text,
                                          "Truthful", e.text, variant);
    }
    std::string serialized;
    for (const Explanation& e : rank(std::move(batch))) {
      Json j{{"review_id", e.review_id},
             {"answer", e.answer},
             {"text", e.text},
             {"seed", e.seed},
             {"sample_index", e.sample_index},
             {"score", e.score->value}};
      serialized += j.dump() + "\n";
    }
    return serialized;
  };
  CHECK(run_once() == run_once());
}
