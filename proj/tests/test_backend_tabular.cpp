#include <doctest.h>

#include <cmath>
#include <map>

#include "pex/errors.hpp"
#include "pex/stats.hpp"
#include "pex/tabular_lm.hpp"
#include "pex/tokenize.hpp"
#include "support/oracles.hpp"

using namespace pex;

namespace {

TabularFixture single_token_fixture(double p_ok) {
  // One question, one-token explanation "ok" with probability p_ok under
  // both answers; the rest of the mass terminates immediately.
  TabularFixture f;
  f.task = prompting::builtin_task("toy");
  TabularQuestion q;
  q.id = "q";
  q.review = "tiny fixture review";
  q.positive_prob = 0.5;
  TabularNode root;
  root.eos_prob = 1.0 - p_ok;
  root.tokens = {"ok"};
  root.probs = {p_ok};
  root.children = {TabularNode{.eos_prob = 1.0}};
  q.positive_tree = root;
  q.negative_tree = root;
  f.questions.push_back(q);
  return f;
}

}  // namespace

TEST_CASE("single-token continuation scores its direct log-probability") {
  const TabularLm lm(single_token_fixture(0.5));
  const std::string prompt = prompting::render_explain_prompt(
      lm.task(), "tiny fixture review", "Truthful");
  const ScoredSequence scored = lm.sequence_logprob(prompt, "ok");
  CHECK(scored.total == doctest::Approx(std::log(0.5)).epsilon(1e-12));
  CHECK(scored.tokens.size() == 1);
}

TEST_CASE("two-token continuation sums per-token log-probabilities") {
  // P("specific")=0.5 then P("details"|specific)=0.2 under Truthful.
  TabularFixture f;
  f.task = prompting::builtin_task("toy");
  TabularQuestion q;
  q.id = "q";
  q.review = "two token review";
  q.positive_prob = 0.5;
  TabularNode child;
  child.eos_prob = 0.8;
  child.tokens = {"details"};
  child.probs = {0.2};
  child.children = {TabularNode{.eos_prob = 1.0}};
  TabularNode root;
  root.eos_prob = 0.5;
  root.tokens = {"specific"};
  root.probs = {0.5};
  root.children = {child};
  q.positive_tree = root;
  q.negative_tree = root;
  f.questions.push_back(q);
  const TabularLm lm(f);

  const std::string prompt = prompting::render_explain_prompt(
      lm.task(), "two token review", "Truthful");
  const ScoredSequence scored = lm.sequence_logprob(prompt, "specific details");
  CHECK(scored.token_logprobs.size() == 2);
  CHECK(scored.total == doctest::Approx(std::log(0.1)).epsilon(1e-12));
  double sum = 0.0;
  for (double lp : scored.token_logprobs) {
    CHECK(lp <= 0.0);
    sum += lp;
  }
  CHECK(scored.total == doctest::Approx(sum).epsilon(1e-15));
}

TEST_CASE("teacher-forced totals equal enumerated path log-probabilities") {
  const TabularLm lm(testing::canonical_fixture());
  ScoreOptions complete;
  complete.treat_as_complete = true;
  for (const TabularQuestion& q : lm.fixture().questions) {
    const auto paths = lm.enumerate(q.review);
    double mass = 0.0;
    for (const EnumeratedPath& path : paths) {
      mass += path.prob;
      if (path.tokens.empty()) continue;  // nothing to teacher-force
      const std::string prompt =
          prompting::render_explain_prompt(lm.task(), q.review, path.answer);
      const double answer_p = path.answer == lm.task().positive_label
                                  ? q.positive_prob
                                  : 1.0 - q.positive_prob;
      const double expected = std::log(path.prob / answer_p);
      const ScoredSequence scored =
          lm.sequence_logprob(prompt, join_tokens(path.tokens), complete);
      CHECK(scored.total == doctest::Approx(expected).epsilon(1e-9));
    }
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("answer log-odds match closed forms and antisymmetry is exact") {
  const TabularLm lm(testing::canonical_fixture());
  const std::string prior =
      prompting::render_prior_prompt(lm.task(), "the pool was amazing and staff kind");

  const double logodds = answer_logodds(lm, prior, "Truthful", "Deceptive");
  CHECK(logodds == doctest::Approx(std::log(0.7 / 0.3)).epsilon(1e-12));
  CHECK(answer_logodds(lm, prior, "Deceptive", "Truthful") == -logodds);

  const TabularLm even(single_token_fixture(0.5));
  const std::string even_prior =
      prompting::render_prior_prompt(even.task(), "tiny fixture review");
  CHECK(answer_logodds(even, even_prior, "Truthful", "Deceptive") == 0.0);
}

TEST_CASE("prior log-odds of 0.8 against 0.2 is ln 4") {
  TabularFixture f = single_token_fixture(0.5);
  f.questions[0].positive_prob = 0.8;
  const TabularLm lm(f);
  const std::string prior =
      prompting::render_prior_prompt(lm.task(), "tiny fixture review");
  CHECK(answer_logodds(lm, prior, "Truthful", "Deceptive") ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("zero-probability tokens require the allow-zero escape hatch") {
  const TabularLm lm(testing::canonical_fixture());
  const std::string prompt = prompting::render_explain_prompt(
      lm.task(), "the pool was amazing and staff kind", "Truthful");
  CHECK_THROWS_AS(lm.sequence_logprob(prompt, "unknown words"), DomainError);

  ScoreOptions opts;
  opts.allow_zero = true;
  const ScoredSequence scored = lm.sequence_logprob(prompt, "unknown words", opts);
  CHECK(scored.total == doctest::Approx(2.0 * std::log(1e-300)));

  CHECK_THROWS_AS(lm.sequence_logprob(prompt, ""), DomainError);
}

TEST_CASE("scoring is reproducible and matches across repeated calls") {
  const TabularLm lm(testing::canonical_fixture());
  const std::string prompt = prompting::render_explain_prompt(
      lm.task(), "the pool was amazing and staff kind", "Truthful");
  const double a = lm.sequence_logprob(prompt, "specific details").total;
  const double b = lm.sequence_logprob(prompt, "specific details").total;
  CHECK(a == b);
}

TEST_CASE("sampling is deterministic given seed and greedy in the cold limit") {
  const TabularLm lm(testing::canonical_fixture());
  const std::string prompt = prompting::render_explain_prompt(
      lm.task(), "the pool was amazing and staff kind", "Truthful");

  const SampleResult first = lm.sample(prompt, 1.0, 7, 16);
  const SampleResult second = lm.sample(prompt, 1.0, 7, 16);
  CHECK(first.text == second.text);
  CHECK_FALSE(first.truncated);

  // Temperature -> 0+ concentrates on the argmax path: specific (0.6) then
  // details (1.0).
  const SampleResult greedy = lm.sample(prompt, 1e-6, 3, 16);
  CHECK(greedy.text == "specific details");

  CHECK_THROWS_AS(lm.sample(prompt, 0.0, 1, 16), DomainError);
}

TEST_CASE("sampling frequencies converge to enumerated path probabilities") {
  const TabularLm lm(testing::canonical_fixture());
  const std::string review = "clean rooms but rude staff overall";
  const std::string prompt =
      prompting::render_explain_prompt(lm.task(), review, "Truthful");

  std::map<std::string, double> expected;  // P(e | q, Truthful)
  for (const EnumeratedPath& path : lm.enumerate(review)) {
    if (path.answer != "Truthful") continue;
    expected[join_tokens(path.tokens)] = path.prob / 0.4;
  }
  REQUIRE(expected.size() == 4);  // "", "nice tone", "nice room", "ok"

  constexpr int kDraws = 10000;
  std::map<std::string, int> counts;
  for (int draw = 0; draw < kDraws; ++draw) {
    ++counts[lm.sample(prompt, 1.0, 100000 + static_cast<std::uint64_t>(draw), 16)
                 .text];
  }

  // Frequencies within +-0.02 of exact probabilities.
  double chi2 = 0.0;
  for (const auto& [text, prob] : expected) {
    const double observed = counts[text];
    CHECK(std::fabs(observed / kDraws - prob) <= 0.02);
    const double expect = prob * kDraws;
    chi2 += (observed - expect) * (observed - expect) / expect;
  }
  // Chi-square goodness of fit not rejected at alpha = 0.01.
  const double p = stats::detail::chi_square_sf(
      chi2, static_cast<double>(expected.size() - 1));
  CHECK(p > 0.01);
}

TEST_CASE("fixture JSON round trip preserves scores") {
  const TabularLm lm(testing::canonical_fixture());
  const TabularLm reloaded = TabularLm::from_json(lm.to_json());
  const std::string prompt = prompting::render_explain_prompt(
      lm.task(), "the pool was amazing and staff kind", "Deceptive");
  CHECK(lm.sequence_logprob(prompt, "generic praise").total ==
        reloaded.sequence_logprob(prompt, "generic praise").total);
}

TEST_CASE("invalid fixtures are rejected") {
  TabularFixture f = single_token_fixture(0.5);
  f.questions[0].positive_tree.probs[0] = 0.7;  // sums to 1.2
  CHECK_THROWS_AS(TabularLm{f}, DataError);

  TabularFixture dup = single_token_fixture(0.5);
  dup.questions.push_back(dup.questions[0]);
  CHECK_THROWS_AS(TabularLm{dup}, DataError);
}

TEST_CASE("unknown review or unparseable prompt raises a domain error") {
  const TabularLm lm(testing::canonical_fixture());
  CHECK_THROWS_AS(lm.sequence_logprob("free-form prompt", "ok"), DomainError);
  const std::string prompt =
      prompting::render_explain_prompt(lm.task(), "never seen review", "Truthful");
  CHECK_THROWS_AS(lm.sequence_logprob(prompt, "ok"), DomainError);
}
