#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "pex/backend.hpp"
#include "pex/io.hpp"
#include "pex/prompting.hpp"

namespace pex {

// Node of an explanation distribution: P(next word | prefix) plus the
// probability of terminating at this prefix. eos_prob + sum(next probs)
// must be 1 within 1e-9.
struct TabularNode {
  double eos_prob = 0.0;
  std::vector<std::string> tokens;       // fixture order, pinned for sampling
  std::vector<double> probs;             // parallel to tokens
  std::vector<TabularNode> children;     // parallel to tokens
};

// One question: the answer prior P(a | q) and, per answer, an explanation
// distribution over bounded-length word sequences.
struct TabularQuestion {
  std::string id;
  std::string review;
  double positive_prob = 0.5;  // P(task.positive_label | q)
  TabularNode positive_tree;
  TabularNode negative_tree;
};

struct TabularFixture {
  prompting::TaskSpec task;
  std::vector<prompting::PromptVariant> variants;  // recognized Q' formats
  std::vector<TabularQuestion> questions;
  std::string model_id = "tabular";
};

// A fully enumerable (answer, explanation) path with its exact probability.
struct EnumeratedPath {
  std::string answer;
  std::vector<std::string> tokens;
  double prob = 0.0;  // P(answer, explanation | q), terminator included
};

// Exact enumerable model. Answers every query from one explicit joint
// distribution per question:
//   explanation prompts  -> P(e | q, a) by tree walk,
//   adjusted prompts     -> P(a | q, e) by Bayes over the same joint,
//   prior/bare prompts   -> P(a | q).
// Prompts are recognized by matching the task templates; unrecognized
// prompts or unknown reviews raise DomainError.
class TabularLm : public LmBackend {
 public:
  explicit TabularLm(TabularFixture fixture);

  static TabularLm from_json(const Json& j);
  static TabularLm load(const std::filesystem::path& path);
  Json to_json() const;

  BackendKind kind() const override { return BackendKind::tabular; }
  Capabilities capabilities() const override { return {true, true, true}; }
  std::string id() const override { return fixture_.model_id; }

  ScoredSequence sequence_logprob(std::string_view prompt,
                                  std::string_view continuation,
                                  const ScoreOptions& opts = {}) const override;

  SampleResult sample(std::string_view prompt, double temperature,
                      std::uint64_t seed,
                      std::size_t max_tokens) const override;

  // All positive-probability (answer, explanation) paths for a review's
  // question, with exact probabilities. Sums to 1 within 1e-9.
  std::vector<EnumeratedPath> enumerate(std::string_view review) const;

  const TabularFixture& fixture() const { return fixture_; }
  const prompting::TaskSpec& task() const { return fixture_.task; }

 private:
  const TabularQuestion& question_for(std::string_view review) const;
  double answer_prob(const TabularQuestion& q, std::string_view answer) const;
  // P(e | q, a) including the terminator factor; 0 when e leaves the tree.
  double explanation_prob(const TabularNode& root,
                          const std::vector<std::string>& tokens) const;

  TabularFixture fixture_;
  std::unordered_map<std::string, std::size_t> review_index_;
};

}  // namespace pex
