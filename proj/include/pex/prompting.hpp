#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace pex::prompting {

// Binary opinion-spam task: two answer labels where each is the negation of
// the other, plus the prompt templates used for generation and scoring.
// Templates carry named slots "{review}", "{explanation}", "{answer}".
struct TaskSpec {
  std::string id;
  std::string positive_label;  // e.g. "Truthful"
  std::string negative_label;  // e.g. "Deceptive"
  std::string question_template;           // {review}
  std::string explain_template_positive;   // {review}
  std::string explain_template_negative;   // {review}
  std::string prior_template;              // {review}; ends with the answer cue
  std::string one_shot;  // prepended to generation prompts; empty = zero-shot

  bool is_label(std::string_view answer) const {
    return answer == positive_label || answer == negative_label;
  }
  const std::string& other_label(std::string_view answer) const;
};

// One scoring-prompt format. "default" is the Analysis-style format used for
// adjusted scoring; V1/V2/V3 are the sensitivity-study variants.
struct PromptVariant {
  std::string id;
  std::string template_text;  // {review}, {explanation}
};

// Replaces every "{slot}" occurrence; unknown slots are left intact.
std::string render_template(std::string_view tmpl,
                            std::span<const std::pair<std::string, std::string>> slots);

std::string render_question(const TaskSpec& task, std::string_view review);

// Q(q, a): generation prompt asking the model to justify `answer`.
// Prefixed by the task's one-shot example when present.
std::string render_explain_prompt(const TaskSpec& task, std::string_view review,
                                  std::string_view answer);

// Q'(q, e): scoring prompt with the explanation substituted; the trailing cue
// is left open for answer-label continuation scoring.
std::string render_adjusted_prompt(const PromptVariant& variant,
                                   std::string_view review,
                                   std::string_view explanation);

// Bare question plus the answer cue, used for the prior log-odds term.
std::string render_prior_prompt(const TaskSpec& task, std::string_view review);

// R(a, e) = "Answer: <a>. Analysis: <e>"
std::string render_student_response(std::string_view answer,
                                    std::string_view explanation);

// Inverse of render_student_response. Throws DomainError when the text does
// not have the response shape or when the recovered explanation contains the
// delimiters "Answer:" / "Analysis:" (ambiguous round trip).
std::pair<std::string, std::string> parse_student_response(std::string_view text);

// Recognition of rendered prompts, used by the tabular backend to answer
// queries from its exact joint distribution.
struct ParsedPrompt {
  enum class Kind { explain_request, adjusted_query, prior_query, bare_question };
  Kind kind = Kind::bare_question;
  std::string review;
  std::string answer;       // explain_request
  std::string explanation;  // adjusted_query
  std::string variant_id;   // adjusted_query
};

std::optional<ParsedPrompt> parse_prompt(const TaskSpec& task,
                                         std::span<const PromptVariant> variants,
                                         std::string_view text);

// Built-in tasks: "tripadvisor", "amazon" (one-shot), "toy" (zero-shot,
// same templates as tripadvisor). Throws ConfigError for unknown ids.
TaskSpec builtin_task(std::string_view id);

// default, V1, V2, V3 in that order.
std::vector<PromptVariant> builtin_variants();
const PromptVariant& find_variant(std::span<const PromptVariant> variants,
                                  std::string_view id);

// Template fixture manifest: maps task ids and variant ids onto UTF-8
// template files. Paths in the manifest are relative to the manifest file.
struct TemplateSet {
  std::vector<TaskSpec> tasks;
  std::vector<PromptVariant> variants;
  std::string response_template;
};

TemplateSet load_template_manifest(const std::filesystem::path& manifest_path);

}  // namespace pex::prompting
