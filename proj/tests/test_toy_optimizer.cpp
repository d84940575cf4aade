#include <doctest.h>

#include <cmath>

#include "pex/errors.hpp"
#include "pex/tokenize.hpp"
#include "pex/toy_optimizer.hpp"
#include "support/oracles.hpp"

using namespace pex;
using namespace pex::toy;

namespace {

SoftmaxLm small_model() {
  return SoftmaxLm({"a", "b", "c", "d", "</s>"});
}

SoftmaxLm random_model(Rng& rng) {
  SoftmaxLm model = small_model();
  // Materialize a handful of rows with random logits, contexts drawn over
  // tokens plus the before-start sentinel.
  const std::size_t n_rows = 3 + bounded(rng, 4);
  for (std::size_t r = 0; r < n_rows; ++r) {
    const ContextKey key{static_cast<std::int32_t>(bounded(rng, 6)) - 1,
                         static_cast<std::int32_t>(bounded(rng, 6)) - 1};
    for (int j = 0; j < 5; ++j) {
      model.set_logit(key, j, (uniform01(rng) - 0.5) * 3.0);
    }
  }
  return model;
}

std::string random_words(Rng& rng, std::size_t min_len, std::size_t max_len) {
  static const char* pool[] = {"a", "b", "c", "d"};
  const std::size_t len = min_len + bounded(rng, max_len - min_len + 1);
  std::string out;
  for (std::size_t i = 0; i < len; ++i) {
    if (i > 0) out += " ";
    out += pool[bounded(rng, 4)];
  }
  return out;
}

std::vector<SequenceExample> random_sequences(Rng& rng, std::size_t count) {
  std::vector<SequenceExample> data;
  for (std::size_t i = 0; i < count; ++i) {
    data.push_back({random_words(rng, 0, 3), random_words(rng, 1, 4)});
  }
  return data;
}

std::vector<preference::PreferencePair> random_pairs(Rng& rng,
                                                     std::size_t count) {
  std::vector<preference::PreferencePair> pairs;
  for (std::size_t i = 0; i < count; ++i) {
    preference::PreferencePair p;
    p.prompt = random_words(rng, 0, 3);
    p.chosen = random_words(rng, 1, 3);
    do {
      p.rejected = random_words(rng, 1, 3);
    } while (p.rejected == p.chosen);
    p.chosen_score = 1.0;
    p.rejected_score = -1.0;
    pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace

TEST_CASE("uniform model scores a one-token answer at ln V") {
  const SoftmaxLm model = small_model();  // no trained rows: uniform
  const std::vector<SequenceExample> data = {{"a b", "c"}};
  const LossReport report = sft_loss_and_grad(model, data);
  CHECK(report.loss == doctest::Approx(std::log(5.0)).epsilon(1e-12));
}

TEST_CASE("a model concentrated on the answers has near-zero loss") {
  SoftmaxLm model = small_model();
  // Push all mass onto the target at the relevant context.
  const int c = model.require_token_id("c");
  model.set_logit(ContextKey{model.require_token_id("a"),
                             model.require_token_id("b")},
                  c, 60.0);
  const std::vector<SequenceExample> data = {{"a b", "c"}};
  CHECK(sft_loss_and_grad(model, data).loss < 1e-12);
}

TEST_CASE("student MLE on multi-token responses sums word-level terms") {
  const SoftmaxLm model = small_model();
  const std::vector<SequenceExample> data = {{"a", "b c d"}};
  const LossReport report = student_mle_loss_and_grad(model, data);
  CHECK(report.loss == doctest::Approx(3.0 * std::log(5.0)).epsilon(1e-12));
}

TEST_CASE("sft gradient matches central finite differences") {
  Rng rng = make_rng(41);
  for (int trial = 0; trial < 30; ++trial) {
    const SoftmaxLm model = random_model(rng);
    const auto data = random_sequences(rng, 2 + bounded(rng, 3));
    const LossReport report = sft_loss_and_grad(model, data);
    const double err = testing::max_grad_rel_error(
        model, report.gradient,
        [&](const SoftmaxLm& m) { return sft_loss_and_grad(m, data).loss; });
    CHECK(err < 1e-5);
  }
}

TEST_CASE("student MLE gradient matches central finite differences") {
  Rng rng = make_rng(42);
  for (int trial = 0; trial < 30; ++trial) {
    const SoftmaxLm model = random_model(rng);
    const auto data = random_sequences(rng, 2 + bounded(rng, 3));
    const LossReport report = student_mle_loss_and_grad(model, data);
    const double err = testing::max_grad_rel_error(
        model, report.gradient, [&](const SoftmaxLm& m) {
          return student_mle_loss_and_grad(m, data).loss;
        });
    CHECK(err < 1e-5);
  }
}

TEST_CASE("dpo gradient matches central finite differences") {
  Rng rng = make_rng(43);
  DpoConfig config;
  config.beta = 0.1;
  for (int trial = 0; trial < 30; ++trial) {
    const SoftmaxLm policy = random_model(rng);
    const SoftmaxLm reference = random_model(rng);
    const auto pairs = random_pairs(rng, 2 + bounded(rng, 3));
    const LossReport report = dpo_loss_and_grad(policy, reference, pairs, config);
    const double err = testing::max_grad_rel_error(
        policy, report.gradient, [&](const SoftmaxLm& m) {
          return dpo_loss_and_grad(m, reference, pairs, config).loss;
        });
    CHECK(err < 1e-5);
  }
}

TEST_CASE("dpo with policy equal to reference sits at ln 2 with zero margins") {
  Rng rng = make_rng(44);
  const SoftmaxLm reference = random_model(rng);
  const SoftmaxLm policy = reference;
  const auto pairs = random_pairs(rng, 4);
  DpoConfig config;
  const LossReport report = dpo_loss_and_grad(policy, reference, pairs, config);
  CHECK(report.loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  for (double margin : report.pair_margins) CHECK(margin == 0.0);
  CHECK(report.mean_margin == 0.0);
}

TEST_CASE("dpo loss tends to ln 2 as beta shrinks") {
  Rng rng = make_rng(45);
  const SoftmaxLm policy = random_model(rng);
  const SoftmaxLm reference = random_model(rng);
  const auto pairs = random_pairs(rng, 4);
  DpoConfig config;
  config.beta = 1e-9;
  const LossReport report = dpo_loss_and_grad(policy, reference, pairs, config);
  CHECK(report.loss == doctest::Approx(std::log(2.0)).epsilon(1e-6));
}

TEST_CASE("one small step from the reference raises every pair margin") {
  Rng rng = make_rng(46);
  const SoftmaxLm reference = random_model(rng);
  // Distinct prompts per pair keep the updates from fighting each other.
  std::vector<preference::PreferencePair> pairs;
  const char* prompts[] = {"a", "b", "c"};
  const char* chosen[] = {"b c", "d a", "a b"};
  const char* rejected[] = {"c b", "a d", "b a"};
  for (int i = 0; i < 3; ++i) {
    preference::PreferencePair p;
    p.prompt = prompts[i];
    p.chosen = chosen[i];
    p.rejected = rejected[i];
    pairs.push_back(p);
  }
  DpoConfig config;
  config.beta = 0.1;
  const LossReport before = dpo_loss_and_grad(reference, reference, pairs, config);
  SoftmaxLm policy = reference;
  policy.apply_gradient(before.gradient, -0.05);
  const LossReport after = dpo_loss_and_grad(policy, reference, pairs, config);
  REQUIRE(after.pair_margins.size() == before.pair_margins.size());
  for (std::size_t i = 0; i < after.pair_margins.size(); ++i) {
    CHECK(after.pair_margins[i] > before.pair_margins[i]);
  }
  CHECK(after.loss < before.loss);
}

TEST_CASE("dpo requires pairs and a positive beta") {
  const SoftmaxLm model = small_model();
  DpoConfig config;
  CHECK_THROWS_AS(dpo_loss_and_grad(model, model, {}, config), DomainError);
  Rng rng = make_rng(47);
  const auto pairs = random_pairs(rng, 1);
  config.beta = 0.0;
  CHECK_THROWS_AS(dpo_loss_and_grad(model, model, pairs, config), DomainError);
}

TEST_CASE("out-of-vocabulary words raise domain errors") {
  const SoftmaxLm model = small_model();
  const std::vector<SequenceExample> data = {{"a", "zebra"}};
  CHECK_THROWS_AS(sft_loss_and_grad(model, data), DomainError);
  CHECK_THROWS_AS(model.sequence_logprob("a", "zebra"), DomainError);
}

TEST_CASE("training with zero learning rate leaves parameters unchanged") {
  Rng rng = make_rng(48);
  const SoftmaxLm model = random_model(rng);
  TrainSpec spec;
  spec.objective = Objective::sft;
  spec.sequences = random_sequences(rng, 3);
  DpoConfig config;
  config.learning_rate = 0.0;
  config.epochs = 5;
  const TrainResult result = train(model, spec, config);
  CHECK(result.model.to_json() == model.to_json());
  REQUIRE(result.trace.size() == 6);
  CHECK(result.trace.front().loss == result.trace.back().loss);
}

TEST_CASE("sft training drives a two-context fixture essentially to zero loss") {
  // The MLE optimum is deterministic (one target per context), so the loss
  // goes to zero; plain gradient descent closes the last gap at a ~1/(lr * t)
  // rate, hence the epoch budget.
  SoftmaxLm model = small_model();
  TrainSpec spec;
  spec.objective = Objective::sft;
  spec.sequences = {{"a b", "c"}, {"b a", "d"}};
  DpoConfig config;
  config.learning_rate = 0.1;
  config.epochs = 2500;
  const TrainResult result = train(std::move(model), spec, config);
  CHECK(result.trace.back().loss < 0.01);
  // Loss trace is monotone non-increasing at this step size.
  for (std::size_t i = 1; i < result.trace.size(); ++i) {
    CHECK(result.trace[i].loss <= result.trace[i - 1].loss + 1e-12);
  }
}

TEST_CASE("sft training converges to the empirical conditionals") {
  SoftmaxLm model = small_model();
  TrainSpec spec;
  spec.objective = Objective::sft;
  // Context (a, b): target c three times, d once.
  spec.sequences = {{"a b", "c"}, {"a b", "c"}, {"a b", "c"}, {"a b", "d"}};
  DpoConfig config;
  config.learning_rate = 0.5;
  config.epochs = 1000;
  const TrainResult result = train(std::move(model), spec, config);

  const ContextKey key{result.model.require_token_id("a"),
                       result.model.require_token_id("b")};
  const std::vector<double> logp = result.model.log_distribution(key);
  std::vector<double> probs(logp.size());
  for (std::size_t j = 0; j < logp.size(); ++j) probs[j] = std::exp(logp[j]);
  const std::vector<double> empirical = {0.0, 0.0, 0.75, 0.25, 0.0};
  double tv = 0.0;
  for (std::size_t j = 0; j < probs.size(); ++j) {
    tv += std::fabs(probs[j] - empirical[j]);
  }
  CHECK(tv / 2.0 < 1e-3);
}

TEST_CASE("dpo training raises the mean margin monotonically at first") {
  Rng rng = make_rng(49);
  SoftmaxLm reference = small_model();
  // Mild random initialization so sequence scores are not all equal.
  for (int r = 0; r < 4; ++r) {
    const ContextKey key{static_cast<std::int32_t>(bounded(rng, 5)) - 1,
                         static_cast<std::int32_t>(bounded(rng, 5)) - 1};
    for (int j = 0; j < 5; ++j) {
      reference.set_logit(key, j, (uniform01(rng) - 0.5));
    }
  }
  TrainSpec spec;
  spec.objective = Objective::dpo;
  spec.pairs = random_pairs(rng, 6);
  spec.reference = &reference;
  DpoConfig config;
  config.learning_rate = 0.2;
  config.epochs = 50;
  const TrainResult result = train(reference, spec, config);
  REQUIRE(result.trace.size() == 51);
  for (std::size_t i = 1; i < result.trace.size(); ++i) {
    CHECK(result.trace[i].mean_margin > result.trace[i - 1].mean_margin);
  }
}

TEST_CASE("divergent training reports the last good state") {
  // Conflicting preferences under an absurd step size push one pair's
  // margin toward -inf, overflowing the loss. Softmax cross-entropy alone
  // has bounded gradients and cannot overflow this way.
  const SoftmaxLm reference = small_model();
  preference::PreferencePair forward;
  forward.prompt = "a";
  forward.chosen = "b";
  forward.rejected = "c";
  preference::PreferencePair backward = forward;
  backward.chosen = "c";
  backward.rejected = "b";

  TrainSpec spec;
  spec.objective = Objective::dpo;
  spec.pairs = {forward, forward, backward};
  spec.reference = &reference;
  DpoConfig config;
  config.beta = 10.0;
  config.learning_rate = 1e307;
  config.epochs = 10;
  try {
    train(reference, spec, config);
    FAIL("expected DivergenceError");
  } catch (const DivergenceError& e) {
    // The preserved state still evaluates to a finite loss.
    CHECK(std::isfinite(
        dpo_loss_and_grad(e.last_good, reference, spec.pairs, config).loss));
  }
}

TEST_CASE("checkpoint JSON round trips scores exactly") {
  Rng rng = make_rng(50);
  const SoftmaxLm model = random_model(rng);
  const SoftmaxLm reloaded = SoftmaxLm::from_json(model.to_json());
  CHECK(model.sequence_logprob("a b", "c d").total ==
        reloaded.sequence_logprob("a b", "c d").total);
  CHECK(model.context_count() == reloaded.context_count());
}

TEST_CASE("softmax sampling is deterministic and terminator-aware") {
  SoftmaxLm model = small_model();
  // Make "</s>" likely after "b" so sampling terminates.
  for (int prev = 0; prev < 5; ++prev) {
    model.set_logit(ContextKey{-1, prev}, model.terminator_id(), 2.0);
    for (int p2 = 0; p2 < 5; ++p2) {
      model.set_logit(ContextKey{p2, prev}, model.terminator_id(), 2.0);
    }
  }
  const SampleResult a = model.sample("a b", 1.0, 9, 8);
  const SampleResult b = model.sample("a b", 1.0, 9, 8);
  CHECK(a.text == b.text);
  CHECK_FALSE(a.truncated);

  SoftmaxLm never_stop = small_model();
  never_stop.set_logit(ContextKey{-1, -1}, never_stop.terminator_id(), -100.0);
  // All rows unseen except a strongly anti-terminator prior is hard to build
  // generically; instead force truncation with max_tokens = 2.
  const SampleResult truncated = never_stop.sample("", 1.0, 3, 2);
  CHECK(truncated.truncated == (word_count(truncated.text) == 2));
}
