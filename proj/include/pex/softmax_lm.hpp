#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "pex/backend.hpp"
#include "pex/io.hpp"

namespace pex::toy {

// Terminator word. Appended as a factor when sequences are scored as
// complete, and ends generation when sampled.
inline constexpr std::string_view kTerminator = "</s>";

// Conditioning context: the last two token ids of the history,
// -1 for positions before the start.
struct ContextKey {
  std::int32_t prev2 = -1;
  std::int32_t prev1 = -1;
  auto operator<=>(const ContextKey&) const = default;
};

// Sparse gradient with respect to the logit table; absent rows are zero.
struct GradTable {
  std::map<ContextKey, std::vector<double>> rows;

  std::vector<double>& row(const ContextKey& key, std::size_t vocab_size);
  void scale(double s);
  double max_abs() const;
};

// Differentiable tabular-softmax language model over whitespace words.
// The parameter table maps (context id, token id) -> logit; a context never
// seen in training keeps an implicit all-zero row, so every sequence has a
// finite log-probability. Likelihood semantics are temperature-1 softmax.
// Immutable through the LmBackend surface; training mutates via
// apply_gradient.
class SoftmaxLm : public LmBackend {
 public:
  explicit SoftmaxLm(std::vector<std::string> vocabulary,
                     std::string model_id = "softmax-toy");

  // Vocabulary in first-appearance order over the corpus, with the
  // terminator appended when absent.
  static std::vector<std::string> build_vocabulary(
      std::span<const std::string> corpus);

  BackendKind kind() const override { return BackendKind::softmax_toy; }
  Capabilities capabilities() const override { return {true, true, false}; }
  std::string id() const override { return model_id_; }

  ScoredSequence sequence_logprob(std::string_view prompt,
                                  std::string_view continuation,
                                  const ScoreOptions& opts = {}) const override;

  SampleResult sample(std::string_view prompt, double temperature,
                      std::uint64_t seed,
                      std::size_t max_tokens) const override;

  std::size_t vocab_size() const { return vocab_.size(); }
  const std::vector<std::string>& vocabulary() const { return vocab_; }
  int token_id(std::string_view word) const;       // -1 when absent
  int require_token_id(std::string_view word) const;  // DomainError when absent
  int terminator_id() const;

  // Tokenizes and maps to ids; unknown words raise DomainError.
  std::vector<int> encode(std::string_view text) const;

  double logit(const ContextKey& key, int token_id) const;
  void set_logit(const ContextKey& key, int token_id, double value);
  // params += scale * grad (materializes rows as needed)
  void apply_gradient(const GradTable& grad, double scale);

  std::size_t context_count() const { return rows_.size(); }
  const std::map<ContextKey, std::vector<double>>& rows() const { return rows_; }

  // log softmax of the context's row (implicit zeros when absent).
  std::vector<double> log_distribution(const ContextKey& key) const;

  // -log P(targets | prompt_ids) under teacher forcing. When grad is given,
  // accumulates coeff * d(-log P)/dlogits into it. include_terminator adds
  // the terminator factor after the last target token.
  double sequence_nll(std::span<const int> prompt_ids,
                      std::span<const int> target_ids, bool include_terminator,
                      GradTable* grad = nullptr, double coeff = 1.0) const;

  Json to_json() const;  // {vocabulary, contexts, logits}
  static SoftmaxLm from_json(const Json& j);
  static SoftmaxLm load(const std::filesystem::path& path);

  void set_model_id(std::string id) { model_id_ = std::move(id); }

 private:
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, int> vocab_index_;
  std::map<ContextKey, std::vector<double>> rows_;
  std::string model_id_;
};

}  // namespace pex::toy
