#include <doctest.h>

#include "pex/errors.hpp"
#include "pex/prompting.hpp"
#include "pex/rng.hpp"

using namespace pex;
using namespace pex::prompting;

namespace {
const TaskSpec toy_task = builtin_task("toy");
const std::vector<PromptVariant> variants = builtin_variants();
}  // namespace

TEST_CASE("explanation prompt renders the question, answer cue and request") {
  const std::string prompt = render_explain_prompt(toy_task, "R", "Truthful");
  CHECK(prompt ==
        "Is this review truthful or deceptive? Review: R. Answer: Truthful. "
        "Question: Can you explain the main reasons why the review is "
        "truthful?");
  const std::string neg = render_explain_prompt(toy_task, "R", "Deceptive");
  CHECK(neg ==
        "Is this review truthful or deceptive? Review: R. Answer: Deceptive. "
        "Question: Can you explain the main reasons why the review is "
        "deceptive?");
}

TEST_CASE("swapping the answer changes only label-dependent segments") {
  const std::string pos = render_explain_prompt(toy_task, "R", "Truthful");
  const std::string neg = render_explain_prompt(toy_task, "R", "Deceptive");
  // Common prefix ends at the answer cue; suffixes differ only by label case.
  const std::string prefix = "Is this review truthful or deceptive? Review: R. Answer: ";
  CHECK(pos.substr(0, prefix.size()) == prefix);
  CHECK(neg.substr(0, prefix.size()) == prefix);
  CHECK(pos != neg);
}

TEST_CASE("unknown answer label raises a domain error") {
  CHECK_THROWS_AS(render_explain_prompt(toy_task, "R", "Maybe"), DomainError);
}

TEST_CASE("adjusted prompt variants match the published formats") {
  const PromptVariant& v1 = find_variant(variants, "V1");
  CHECK(render_adjusted_prompt(v1, "R", "E") ==
        "Is this review truthful or deceptive? Review: R. Answer: E. "
        "Therefore, this review is");
  const PromptVariant& v2 = find_variant(variants, "V2");
  CHECK(render_adjusted_prompt(v2, "R", "E") ==
        "Please classify the following review as either truthful or "
        "deceptive: R. Answer: E. Hence, this review is");
  const PromptVariant& v3 = find_variant(variants, "V3");
  CHECK(render_adjusted_prompt(v3, "R", "E") ==
        "Evaluate the authenticity of this review: R. Question: Is the review "
        "truthful or deceptive? Analysis: E. Answer: This review is");
  const PromptVariant& dflt = find_variant(variants, "default");
  CHECK(render_adjusted_prompt(dflt, "R", "E") ==
        "Is this review truthful or deceptive? Review: R. Analysis: E.");
}

TEST_CASE("one-shot example prefixes generation prompts only") {
  const TaskSpec hotel = builtin_task("tripadvisor");
  const std::string prompt = render_explain_prompt(hotel, "R", "Truthful");
  CHECK(prompt.substr(0, 8) == "Review: ");
  CHECK(prompt.find("Explanation for deceptive prediction:") !=
        std::string::npos);
  // The adjusted prompt is zero-shot by construction.
  const std::string adjusted =
      render_adjusted_prompt(find_variant(variants, "default"), "R", "E");
  CHECK(adjusted.find("Explanation for") == std::string::npos);
}

TEST_CASE("student response format and round trip") {
  CHECK(render_student_response("Truthful", "reason") ==
        "Answer: Truthful. Analysis: reason");
  CHECK(render_student_response("Deceptive", "") ==
        "Answer: Deceptive. Analysis: ");

  const auto [answer, explanation] =
      parse_student_response("Answer: Truthful. Analysis: reason");
  CHECK(answer == "Truthful");
  CHECK(explanation == "reason");
}

TEST_CASE("student response round trip is the identity on clean pairs") {
  Rng rng = make_rng(11);
  static const char* words[] = {"good", "bad", "detail", "tone", "praise"};
  for (int trial = 0; trial < 50; ++trial) {
    std::string explanation;
    const std::size_t len = bounded(rng, 6);
    for (std::size_t w = 0; w < len; ++w) {
      if (w > 0) explanation += " ";
      explanation += words[bounded(rng, 5)];
    }
    const std::string answer = bounded(rng, 2) == 0 ? "Truthful" : "Deceptive";
    const auto [a, e] =
        parse_student_response(render_student_response(answer, explanation));
    CHECK(a == answer);
    CHECK(e == explanation);
  }
}

TEST_CASE("explanations with reserved delimiters are rejected at parse time") {
  CHECK_THROWS_AS(parse_student_response(
                      "Answer: Truthful. Analysis: see Answer: above"),
                  DomainError);
  CHECK_THROWS_AS(parse_student_response(
                      "Answer: Truthful. Analysis: nested Analysis: here"),
                  DomainError);
  CHECK_THROWS_AS(parse_student_response("no answer cue at all"), DomainError);
}

TEST_CASE("prompt parser recognizes every rendered prompt shape") {
  const std::string review = "the pool was amazing and staff kind";

  auto parsed = parse_prompt(toy_task, variants,
                             render_explain_prompt(toy_task, review, "Truthful"));
  REQUIRE(parsed.has_value());
  CHECK(parsed->kind == ParsedPrompt::Kind::explain_request);
  CHECK(parsed->review == review);
  CHECK(parsed->answer == "Truthful");

  parsed = parse_prompt(toy_task, variants,
                        render_adjusted_prompt(find_variant(variants, "V2"),
                                               review, "some analysis"));
  REQUIRE(parsed.has_value());
  CHECK(parsed->kind == ParsedPrompt::Kind::adjusted_query);
  CHECK(parsed->review == review);
  CHECK(parsed->explanation == "some analysis");
  CHECK(parsed->variant_id == "V2");

  parsed = parse_prompt(toy_task, variants,
                        render_prior_prompt(toy_task, review));
  REQUIRE(parsed.has_value());
  CHECK(parsed->kind == ParsedPrompt::Kind::prior_query);
  CHECK(parsed->review == review);

  parsed = parse_prompt(toy_task, variants, render_question(toy_task, review));
  REQUIRE(parsed.has_value());
  CHECK(parsed->kind == ParsedPrompt::Kind::bare_question);
  CHECK(parsed->review == review);

  CHECK_FALSE(parse_prompt(toy_task, variants, "unrelated text").has_value());
}

TEST_CASE("one-shot prefix is stripped before prompt recognition") {
  const TaskSpec hotel = builtin_task("tripadvisor");
  const std::string prompt = render_explain_prompt(hotel, "R", "Deceptive");
  const auto parsed = parse_prompt(hotel, variants, prompt);
  REQUIRE(parsed.has_value());
  CHECK(parsed->kind == ParsedPrompt::Kind::explain_request);
  CHECK(parsed->answer == "Deceptive");
  CHECK(parsed->review == "R");
}

TEST_CASE("template fixture files match the built-in templates byte for byte") {
  const auto set = load_template_manifest(
      std::filesystem::path(PEX_SOURCE_DIR) / "fixtures" / "manifest.json");
  REQUIRE(set.tasks.size() == 3);
  for (const TaskSpec& from_files : set.tasks) {
    const TaskSpec builtin = builtin_task(from_files.id);
    CHECK(from_files.question_template == builtin.question_template);
    CHECK(from_files.explain_template_positive ==
          builtin.explain_template_positive);
    CHECK(from_files.explain_template_negative ==
          builtin.explain_template_negative);
    CHECK(from_files.prior_template == builtin.prior_template);
    CHECK(from_files.one_shot == builtin.one_shot);
  }
  REQUIRE(set.variants.size() == 4);
  for (const PromptVariant& from_files : set.variants) {
    CHECK(from_files.template_text ==
          find_variant(variants, from_files.id).template_text);
  }
  CHECK(set.response_template == "Answer: {answer}. Analysis: {explanation}");
}
