#include "pex/softmax_lm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pex/errors.hpp"
#include "pex/rng.hpp"
#include "pex/tokenize.hpp"

namespace pex::toy {

std::vector<double>& GradTable::row(const ContextKey& key,
                                    std::size_t vocab_size) {
  auto [it, inserted] = rows.try_emplace(key);
  if (inserted) it->second.assign(vocab_size, 0.0);
  return it->second;
}

void GradTable::scale(double s) {
  for (auto& [_, row] : rows) {
    for (double& g : row) g *= s;
  }
}

double GradTable::max_abs() const {
  double m = 0.0;
  for (const auto& [_, row] : rows) {
    for (double g : row) m = std::max(m, std::fabs(g));
  }
  return m;
}

SoftmaxLm::SoftmaxLm(std::vector<std::string> vocabulary, std::string model_id)
    : vocab_(std::move(vocabulary)), model_id_(std::move(model_id)) {
  if (vocab_.empty()) throw DataError("softmax model needs a vocabulary");
  for (std::size_t i = 0; i < vocab_.size(); ++i) {
    if (vocab_[i].empty() ||
        vocab_[i].find_first_of(" \t\n") != std::string::npos) {
      throw DataError("vocabulary entries must be single words");
    }
    if (!vocab_index_.emplace(vocab_[i], static_cast<int>(i)).second) {
      throw DataError("duplicate vocabulary word: " + vocab_[i]);
    }
  }
}

std::vector<std::string> SoftmaxLm::build_vocabulary(
    std::span<const std::string> corpus) {
  std::vector<std::string> vocab;
  std::unordered_map<std::string, int> seen;
  for (const std::string& text : corpus) {
    for (std::string& word : tokenize(text)) {
      if (seen.emplace(word, 1).second) vocab.push_back(std::move(word));
    }
  }
  if (seen.find(std::string(kTerminator)) == seen.end()) {
    vocab.emplace_back(kTerminator);
  }
  return vocab;
}

int SoftmaxLm::token_id(std::string_view word) const {
  auto it = vocab_index_.find(std::string(word));
  return it == vocab_index_.end() ? -1 : it->second;
}

int SoftmaxLm::require_token_id(std::string_view word) const {
  const int id = token_id(word);
  if (id < 0) {
    throw DomainError("word outside model vocabulary: " + std::string(word));
  }
  return id;
}

int SoftmaxLm::terminator_id() const { return require_token_id(kTerminator); }

std::vector<int> SoftmaxLm::encode(std::string_view text) const {
  std::vector<int> ids;
  for (const std::string& word : tokenize(text)) {
    ids.push_back(require_token_id(word));
  }
  return ids;
}

double SoftmaxLm::logit(const ContextKey& key, int tid) const {
  auto it = rows_.find(key);
  if (it == rows_.end()) return 0.0;
  return it->second[static_cast<std::size_t>(tid)];
}

void SoftmaxLm::set_logit(const ContextKey& key, int tid, double value) {
  auto [it, inserted] = rows_.try_emplace(key);
  if (inserted) it->second.assign(vocab_.size(), 0.0);
  it->second[static_cast<std::size_t>(tid)] = value;
}

void SoftmaxLm::apply_gradient(const GradTable& grad, double scale) {
  if (scale == 0.0) return;  // no-op steps must not materialize rows
  for (const auto& [key, grow] : grad.rows) {
    auto [it, inserted] = rows_.try_emplace(key);
    if (inserted) it->second.assign(vocab_.size(), 0.0);
    for (std::size_t j = 0; j < grow.size(); ++j) {
      it->second[j] += scale * grow[j];
    }
  }
}

std::vector<double> SoftmaxLm::log_distribution(const ContextKey& key) const {
  std::vector<double> out(vocab_.size(), 0.0);
  auto it = rows_.find(key);
  if (it != rows_.end()) out = it->second;
  const double m = *std::max_element(out.begin(), out.end());
  double lse = 0.0;
  for (double l : out) lse += std::exp(l - m);
  lse = m + std::log(lse);
  for (double& l : out) l -= lse;
  return out;
}

namespace {

ContextKey context_at(std::span<const int> ids, std::size_t pos) {
  ContextKey key;
  key.prev1 = pos >= 1 ? ids[pos - 1] : -1;
  key.prev2 = pos >= 2 ? ids[pos - 2] : -1;
  return key;
}

}  // namespace

double SoftmaxLm::sequence_nll(std::span<const int> prompt_ids,
                               std::span<const int> target_ids,
                               bool include_terminator, GradTable* grad,
                               double coeff) const {
  std::vector<int> full(prompt_ids.begin(), prompt_ids.end());
  full.insert(full.end(), target_ids.begin(), target_ids.end());
  if (include_terminator) full.push_back(terminator_id());

  double nll = 0.0;
  for (std::size_t pos = prompt_ids.size(); pos < full.size(); ++pos) {
    const ContextKey key = context_at(full, pos);
    const std::vector<double> logp = log_distribution(key);
    const int target = full[pos];
    nll -= logp[static_cast<std::size_t>(target)];
    if (grad != nullptr) {
      std::vector<double>& grow = grad->row(key, vocab_.size());
      for (std::size_t j = 0; j < grow.size(); ++j) {
        // d(-log softmax[target])/dlogit_j = softmax_j - [j == target]
        grow[j] += coeff * std::exp(logp[j]);
      }
      grow[static_cast<std::size_t>(target)] -= coeff;
    }
  }
  return nll;
}

ScoredSequence SoftmaxLm::sequence_logprob(std::string_view prompt,
                                           std::string_view continuation,
                                           const ScoreOptions& opts) const {
  const std::vector<int> prompt_ids = encode(prompt);
  const std::vector<int> cont_ids = encode(continuation);
  if (cont_ids.empty()) {
    throw DomainError("sequence_logprob: empty continuation");
  }
  std::vector<int> full = prompt_ids;
  full.insert(full.end(), cont_ids.begin(), cont_ids.end());
  if (opts.treat_as_complete) full.push_back(terminator_id());

  ScoredSequence out;
  for (std::size_t pos = prompt_ids.size(); pos < full.size(); ++pos) {
    const std::vector<double> logp = log_distribution(context_at(full, pos));
    out.tokens.push_back(vocab_[static_cast<std::size_t>(full[pos])]);
    out.token_logprobs.push_back(logp[static_cast<std::size_t>(full[pos])]);
  }
  out.total = 0.0;
  for (double lp : out.token_logprobs) out.total += lp;
  return out;
}

SampleResult SoftmaxLm::sample(std::string_view prompt, double temperature,
                               std::uint64_t seed,
                               std::size_t max_tokens) const {
  if (temperature <= 0.0) {
    throw DomainError("sample: temperature must be positive");
  }
  const int term = terminator_id();
  std::vector<int> ids = encode(prompt);
  const std::size_t prompt_len = ids.size();
  Rng rng = make_rng(seed);

  SampleResult result;
  while (true) {
    if (ids.size() - prompt_len >= max_tokens) {
      result.truncated = true;
      break;
    }
    const std::vector<double> logp = log_distribution(context_at(ids, ids.size()));
    double max_scaled = -std::numeric_limits<double>::infinity();
    for (double lp : logp) max_scaled = std::max(max_scaled, lp / temperature);
    std::vector<double> weights(logp.size());
    double total = 0.0;
    for (std::size_t j = 0; j < logp.size(); ++j) {
      weights[j] = std::exp(logp[j] / temperature - max_scaled);
      total += weights[j];
    }
    double u = uniform01(rng) * total;
    int pick = static_cast<int>(logp.size()) - 1;
    for (std::size_t j = 0; j < weights.size(); ++j) {
      u -= weights[j];
      if (u <= 0.0) {
        pick = static_cast<int>(j);
        break;
      }
    }
    if (pick == term) break;
    ids.push_back(pick);
  }

  std::vector<std::string> words;
  for (std::size_t i = prompt_len; i < ids.size(); ++i) {
    words.push_back(vocab_[static_cast<std::size_t>(ids[i])]);
  }
  result.text = join_tokens(words);
  return result;
}

Json SoftmaxLm::to_json() const {
  Json j;
  j["model_id"] = model_id_;
  j["vocabulary"] = vocab_;
  Json contexts = Json::array();
  Json logits = Json::array();
  for (const auto& [key, row] : rows_) {
    contexts.push_back(Json::array({key.prev2, key.prev1}));
    logits.push_back(row);
  }
  j["contexts"] = contexts;
  j["logits"] = logits;
  return j;
}

SoftmaxLm SoftmaxLm::from_json(const Json& j) {
  SoftmaxLm model(j.at("vocabulary").get<std::vector<std::string>>(),
                  j.value("model_id", std::string("softmax-toy")));
  const Json& contexts = j.at("contexts");
  const Json& logits = j.at("logits");
  if (contexts.size() != logits.size()) {
    throw DataError("softmax checkpoint: contexts/logits size mismatch");
  }
  for (std::size_t i = 0; i < contexts.size(); ++i) {
    ContextKey key{contexts[i].at(0).get<std::int32_t>(),
                   contexts[i].at(1).get<std::int32_t>()};
    std::vector<double> row = logits[i].get<std::vector<double>>();
    if (row.size() != model.vocab_.size()) {
      throw DataError("softmax checkpoint: logit row width mismatch");
    }
    model.rows_[key] = std::move(row);
  }
  return model;
}

SoftmaxLm SoftmaxLm::load(const std::filesystem::path& path) {
  return from_json(Json::parse(read_file(path)));
}

}  // namespace pex::toy
