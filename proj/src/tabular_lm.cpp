#include "pex/tabular_lm.hpp"

#include <cmath>
#include <optional>

#include "pex/errors.hpp"
#include "pex/rng.hpp"
#include "pex/tokenize.hpp"

namespace pex {

namespace {

constexpr double kDistributionTolerance = 1e-9;
constexpr const char* kTerminatorToken = "</s>";

void validate_node(const TabularNode& node, const std::string& where) {
  if (node.tokens.size() != node.probs.size() ||
      node.tokens.size() != node.children.size()) {
    throw DataError("tabular node arrays out of sync at " + where);
  }
  double sum = node.eos_prob;
  for (std::size_t i = 0; i < node.tokens.size(); ++i) {
    if (node.tokens[i].empty() ||
        node.tokens[i].find_first_of(" \t\n") != std::string::npos) {
      throw DataError("tabular token must be a single word at " + where);
    }
    if (node.probs[i] < 0.0) {
      throw DataError("negative probability at " + where);
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (node.tokens[j] == node.tokens[i]) {
        throw DataError("duplicate token '" + node.tokens[i] + "' at " + where);
      }
    }
    sum += node.probs[i];
  }
  if (node.eos_prob < 0.0) throw DataError("negative eos probability at " + where);
  if (std::fabs(sum - 1.0) > kDistributionTolerance) {
    throw DataError("conditional distribution does not sum to 1 at " + where);
  }
  for (std::size_t i = 0; i < node.children.size(); ++i) {
    if (node.probs[i] > 0.0) {
      validate_node(node.children[i], where + "/" + node.tokens[i]);
    }
  }
}

double scored_logprob(double prob, const ScoreOptions& opts,
                      const std::string& what) {
  if (prob > 0.0) return std::log(prob);
  if (opts.allow_zero) return std::log(kZeroProbabilityFloor);
  throw DomainError("zero probability for " + what +
                    " (set allow_zero to smooth)");
}

TabularNode node_from_json(const Json& j) {
  TabularNode node;
  node.eos_prob = j.value("eos", 0.0);
  if (j.contains("next")) {
    for (const Json& entry : j.at("next")) {
      node.tokens.push_back(entry.at(0).get<std::string>());
      node.probs.push_back(entry.at(1).get<double>());
      node.children.push_back(entry.size() > 2 ? node_from_json(entry.at(2))
                                               : TabularNode{.eos_prob = 1.0});
    }
  }
  return node;
}

Json node_to_json(const TabularNode& node) {
  Json j;
  j["eos"] = node.eos_prob;
  Json next = Json::array();
  for (std::size_t i = 0; i < node.tokens.size(); ++i) {
    next.push_back(Json::array(
        {node.tokens[i], node.probs[i], node_to_json(node.children[i])}));
  }
  j["next"] = next;
  return j;
}

}  // namespace

TabularLm::TabularLm(TabularFixture fixture) : fixture_(std::move(fixture)) {
  if (fixture_.variants.empty()) {
    fixture_.variants = prompting::builtin_variants();
  }
  for (std::size_t i = 0; i < fixture_.questions.size(); ++i) {
    const TabularQuestion& q = fixture_.questions[i];
    if (q.positive_prob < 0.0 || q.positive_prob > 1.0) {
      throw DataError("answer probability outside [0,1] for question " + q.id);
    }
    validate_node(q.positive_tree, q.id + ":" + fixture_.task.positive_label);
    validate_node(q.negative_tree, q.id + ":" + fixture_.task.negative_label);
    if (!review_index_.emplace(q.review, i).second) {
      throw DataError("duplicate review text for question " + q.id);
    }
  }
}

const TabularQuestion& TabularLm::question_for(std::string_view review) const {
  auto it = review_index_.find(std::string(review));
  if (it == review_index_.end()) {
    throw DomainError("review not present in tabular fixture: " +
                      std::string(review.substr(0, 60)));
  }
  return fixture_.questions[it->second];
}

double TabularLm::answer_prob(const TabularQuestion& q,
                              std::string_view answer) const {
  if (answer == fixture_.task.positive_label) return q.positive_prob;
  if (answer == fixture_.task.negative_label) return 1.0 - q.positive_prob;
  throw DomainError("unknown answer label: " + std::string(answer));
}

double TabularLm::explanation_prob(const TabularNode& root,
                                   const std::vector<std::string>& tokens) const {
  const TabularNode* node = &root;
  double prob = 1.0;
  for (const std::string& tok : tokens) {
    std::size_t idx = node->tokens.size();
    for (std::size_t i = 0; i < node->tokens.size(); ++i) {
      if (node->tokens[i] == tok) {
        idx = i;
        break;
      }
    }
    if (idx == node->tokens.size() || node->probs[idx] <= 0.0) return 0.0;
    prob *= node->probs[idx];
    node = &node->children[idx];
  }
  return prob * node->eos_prob;
}

ScoredSequence TabularLm::sequence_logprob(std::string_view prompt,
                                           std::string_view continuation,
                                           const ScoreOptions& opts) const {
  const std::vector<std::string> tokens = tokenize(continuation);
  if (tokens.empty()) {
    throw DomainError("sequence_logprob: empty continuation");
  }
  const auto parsed = prompting::parse_prompt(fixture_.task, fixture_.variants,
                                              prompt);
  if (!parsed) {
    throw DomainError("tabular backend cannot interpret prompt: " +
                      std::string(prompt.substr(0, 60)));
  }
  const TabularQuestion& q = question_for(parsed->review);

  ScoredSequence out;
  using Kind = prompting::ParsedPrompt::Kind;
  if (parsed->kind == Kind::explain_request) {
    const TabularNode* node = &(parsed->answer == fixture_.task.positive_label
                                    ? q.positive_tree
                                    : q.negative_tree);
    bool off_tree = false;
    for (const std::string& tok : tokens) {
      double p = 0.0;
      const TabularNode* child = nullptr;
      if (!off_tree) {
        for (std::size_t i = 0; i < node->tokens.size(); ++i) {
          if (node->tokens[i] == tok) {
            p = node->probs[i];
            child = &node->children[i];
            break;
          }
        }
      }
      out.tokens.push_back(tok);
      out.token_logprobs.push_back(
          scored_logprob(p, opts, "token '" + tok + "'"));
      if (child != nullptr && p > 0.0) {
        node = child;
      } else {
        off_tree = true;
      }
    }
    if (opts.treat_as_complete) {
      const double eos = off_tree ? 0.0 : node->eos_prob;
      out.tokens.push_back(kTerminatorToken);
      out.token_logprobs.push_back(scored_logprob(eos, opts, "terminator"));
    }
  } else {
    // Answer-label continuation against the prior or the Bayes posterior.
    const std::string label(continuation);
    if (!fixture_.task.is_label(label)) {
      throw DomainError(
          "tabular backend scores only answer labels after this prompt, got: " +
          label);
    }
    double p = 0.0;
    if (parsed->kind == Kind::adjusted_query) {
      const std::vector<std::string> expl = tokenize(parsed->explanation);
      const double pe_pos = explanation_prob(q.positive_tree, expl);
      const double pe_neg = explanation_prob(q.negative_tree, expl);
      const double joint_pos = q.positive_prob * pe_pos;
      const double joint_neg = (1.0 - q.positive_prob) * pe_neg;
      const double denom = joint_pos + joint_neg;
      if (denom <= 0.0) {
        throw DomainError(
            "explanation has zero probability under both answers");
      }
      p = (label == fixture_.task.positive_label ? joint_pos : joint_neg) /
          denom;
    } else {
      p = answer_prob(q, label);
    }
    // First label token carries the full log-probability; any further label
    // words are deterministic continuations of the same answer event.
    out.tokens = tokens;
    out.token_logprobs.assign(tokens.size(), 0.0);
    out.token_logprobs[0] = scored_logprob(p, opts, "label '" + label + "'");
  }

  out.total = 0.0;
  for (double lp : out.token_logprobs) out.total += lp;
  return out;
}

SampleResult TabularLm::sample(std::string_view prompt, double temperature,
                               std::uint64_t seed,
                               std::size_t max_tokens) const {
  if (temperature <= 0.0) {
    throw DomainError("sample: temperature must be positive");
  }
  const auto parsed = prompting::parse_prompt(fixture_.task, fixture_.variants,
                                              prompt);
  if (!parsed) {
    throw DomainError("tabular backend cannot interpret prompt: " +
                      std::string(prompt.substr(0, 60)));
  }
  const TabularQuestion& q = question_for(parsed->review);
  Rng rng = make_rng(seed);

  // Temperature-scaled draw over (outcome, prob) entries; zero-probability
  // outcomes never fire.
  const auto draw = [&](const std::vector<std::pair<int, double>>& outcomes) {
    double max_logw = -std::numeric_limits<double>::infinity();
    for (const auto& [_, p] : outcomes) {
      if (p > 0.0) max_logw = std::max(max_logw, std::log(p) / temperature);
    }
    std::vector<double> weights(outcomes.size(), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
      if (outcomes[i].second > 0.0) {
        weights[i] = std::exp(std::log(outcomes[i].second) / temperature -
                              max_logw);
        total += weights[i];
      }
    }
    double u = uniform01(rng) * total;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
      u -= weights[i];
      if (weights[i] > 0.0 && u <= 0.0) return outcomes[i].first;
    }
    for (std::size_t i = outcomes.size(); i-- > 0;) {
      if (weights[i] > 0.0) return outcomes[i].first;
    }
    throw DomainError("sample: no positive-probability outcome");
  };

  using Kind = prompting::ParsedPrompt::Kind;
  if (parsed->kind != Kind::explain_request) {
    std::vector<std::pair<int, double>> outcomes = {
        {0, answer_prob(q, fixture_.task.positive_label)},
        {1, answer_prob(q, fixture_.task.negative_label)}};
    const int pick = draw(outcomes);
    return SampleResult{pick == 0 ? fixture_.task.positive_label
                                  : fixture_.task.negative_label,
                        false};
  }

  const TabularNode* node = &(parsed->answer == fixture_.task.positive_label
                                  ? q.positive_tree
                                  : q.negative_tree);
  std::vector<std::string> words;
  SampleResult result;
  while (true) {
    if (words.size() >= max_tokens) {
      result.truncated = true;
      break;
    }
    std::vector<std::pair<int, double>> outcomes;
    outcomes.emplace_back(-1, node->eos_prob);
    for (std::size_t i = 0; i < node->tokens.size(); ++i) {
      outcomes.emplace_back(static_cast<int>(i), node->probs[i]);
    }
    const int pick = draw(outcomes);
    if (pick < 0) break;  // terminator
    words.push_back(node->tokens[static_cast<std::size_t>(pick)]);
    node = &node->children[static_cast<std::size_t>(pick)];
  }
  result.text = join_tokens(words);
  return result;
}

std::vector<EnumeratedPath> TabularLm::enumerate(std::string_view review) const {
  const TabularQuestion& q = question_for(review);
  std::vector<EnumeratedPath> paths;
  constexpr std::size_t kPathCap = 10000;

  const auto walk = [&](const std::string& answer, const TabularNode& root,
                        double answer_p) {
    std::vector<std::string> stack;
    const auto recurse = [&](const TabularNode& node, double prob,
                             const auto& self) -> void {
      if (paths.size() >= kPathCap) {
        throw DataError("tabular enumeration exceeds path cap");
      }
      if (node.eos_prob > 0.0) {
        paths.push_back({answer, stack, prob * node.eos_prob});
      }
      for (std::size_t i = 0; i < node.tokens.size(); ++i) {
        if (node.probs[i] <= 0.0) continue;
        stack.push_back(node.tokens[i]);
        self(node.children[i], prob * node.probs[i], self);
        stack.pop_back();
      }
    };
    recurse(root, answer_p, recurse);
  };

  walk(fixture_.task.positive_label, q.positive_tree, q.positive_prob);
  walk(fixture_.task.negative_label, q.negative_tree, 1.0 - q.positive_prob);
  return paths;
}

TabularLm TabularLm::from_json(const Json& j) {
  TabularFixture fixture;
  fixture.model_id = j.value("model_id", std::string("tabular"));
  if (j.at("task").is_string()) {
    fixture.task = prompting::builtin_task(j.at("task").get<std::string>());
  } else {
    const Json& t = j.at("task");
    fixture.task.id = t.at("id").get<std::string>();
    fixture.task.positive_label = t.at("labels").at(0).get<std::string>();
    fixture.task.negative_label = t.at("labels").at(1).get<std::string>();
    fixture.task.question_template = t.at("question").get<std::string>();
    fixture.task.explain_template_positive =
        t.at("explain_positive").get<std::string>();
    fixture.task.explain_template_negative =
        t.at("explain_negative").get<std::string>();
    fixture.task.prior_template = t.at("prior").get<std::string>();
    fixture.task.one_shot = t.value("one_shot", std::string());
  }
  if (j.contains("variants")) {
    for (const Json& v : j.at("variants")) {
      fixture.variants.push_back(
          {v.at("id").get<std::string>(), v.at("template").get<std::string>()});
    }
  }
  for (const Json& qj : j.at("questions")) {
    TabularQuestion q;
    q.id = qj.at("id").get<std::string>();
    q.review = qj.at("review").get<std::string>();
    q.positive_prob = qj.at("positive_prob").get<double>();
    q.positive_tree = node_from_json(qj.at("positive_tree"));
    q.negative_tree = node_from_json(qj.at("negative_tree"));
    fixture.questions.push_back(std::move(q));
  }
  return TabularLm(std::move(fixture));
}

TabularLm TabularLm::load(const std::filesystem::path& path) {
  return from_json(Json::parse(read_file(path)));
}

Json TabularLm::to_json() const {
  Json j;
  j["model_id"] = fixture_.model_id;
  Json t;
  t["id"] = fixture_.task.id;
  t["labels"] = {fixture_.task.positive_label, fixture_.task.negative_label};
  t["question"] = fixture_.task.question_template;
  t["explain_positive"] = fixture_.task.explain_template_positive;
  t["explain_negative"] = fixture_.task.explain_template_negative;
  t["prior"] = fixture_.task.prior_template;
  t["one_shot"] = fixture_.task.one_shot;
  j["task"] = t;
  Json variants = Json::array();
  for (const auto& v : fixture_.variants) {
    variants.push_back({{"id", v.id}, {"template", v.template_text}});
  }
  j["variants"] = variants;
  Json questions = Json::array();
  for (const TabularQuestion& q : fixture_.questions) {
    Json qj;
    qj["id"] = q.id;
    qj["review"] = q.review;
    qj["positive_prob"] = q.positive_prob;
    qj["positive_tree"] = node_to_json(q.positive_tree);
    qj["negative_tree"] = node_to_json(q.negative_tree);
    questions.push_back(std::move(qj));
  }
  j["questions"] = questions;
  return j;
}

}  // namespace pex
