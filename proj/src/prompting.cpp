#include "pex/prompting.hpp"

#include <algorithm>

#include "pex/errors.hpp"
#include "pex/io.hpp"

namespace pex::prompting {

namespace {

constexpr std::string_view kQuestionTemplate =
    "Is this review truthful or deceptive? Review: {review}";

constexpr std::string_view kExplainTruthful =
    "Is this review truthful or deceptive? Review: {review}. Answer: Truthful."
    " Question: Can you explain the main reasons why the review is truthful?";

constexpr std::string_view kExplainDeceptive =
    "Is this review truthful or deceptive? Review: {review}. Answer: Deceptive."
    " Question: Can you explain the main reasons why the review is deceptive?";

constexpr std::string_view kPriorTemplate =
    "Is this review truthful or deceptive? Review: {review}. Answer:";

constexpr std::string_view kAdjustedDefault =
    "Is this review truthful or deceptive? Review: {review}."
    " Analysis: {explanation}.";

constexpr std::string_view kAdjustedV1 =
    "Is this review truthful or deceptive? Review: {review}."
    " Answer: {explanation}. Therefore, this review is";

constexpr std::string_view kAdjustedV2 =
    "Please classify the following review as either truthful or deceptive:"
    " {review}. Answer: {explanation}. Hence, this review is";

constexpr std::string_view kAdjustedV3 =
    "Evaluate the authenticity of this review: {review}."
    " Question: Is the review truthful or deceptive?"
    " Analysis: {explanation}. Answer: This review is";

constexpr std::string_view kResponseTemplate =
    "Answer: {answer}. Analysis: {explanation}";

const std::string kHotelOneShot =
    "Review: We stayed at Hotel Monaco and upgraded to a suite. I was "
    "disappointed with the room layout, and shabby furniture. I bumped into "
    "the coffee table and the top almost crashed to the ground. The make up "
    "mirror in the bathroom didnt work, the TV reception was very poor and "
    "overall the room just wasnt worth the $450 we spent there. Next time, we "
    "will go back to Trump Tower across the street, which is far superior to "
    "Hotel Monaco.\n\n"
    "Explanation for truthful prediction: [reason1] Suggests an alternative "
    "hotel: The reviewer suggests an alternative hotel (Trump Tower) that "
    "they believe is superior, which is a practical and often truthful "
    "element in a hotel review. [reason2] Mentions specific details: The "
    "reviewer mentions specific details about the room, such as the room "
    "layout, shabby furniture.\n\n"
    "Review: My stay at the Hotel Monaco recently was fantastic. We got a "
    "very reasonable price for our stay (especially since we were a AAA "
    "member), and there was plenty of perks to utilize; in-room spa "
    "treatments and an evening wine wine hour to name a few. Another thing "
    "that the kids really enjoyed was that, upon request, the staff brought "
    "us a fish in its own fishbowl for our room. How cool is that! The staff "
    "were all very helpful and friendly and our stay was very enjoyable. I "
    "would definitely recommend the Hotel Monaco to anyone in the downtown "
    "Chicago area.\n\n"
    "Explanation for deceptive prediction: [reason1] Generic and overly "
    "positive tone: The review maintains a very positive tone without any "
    "specific details or occurrences that would substantiate such "
    "enthusiasm. The language used is quite general, lacking specific "
    "details or instances that typically accompany genuine experiences. "
    "[reason2] Uncommon or unrealistic details: The mention of receiving a "
    "fish in a fishbowl upon request is an uncommon and specific detail. "
    "While some hotels do offer unique services, the presentation of this "
    "detail, without further elaboration or context, seems exaggerated and "
    "implausible, casting doubt on the review's authenticity.\n\n";

const std::string kAmazonOneShot =
    "Review: I only wanted to use this to charge two phones from one "
    "adapter.  This item at first seemed to be of decent quality.  However, "
    "after 3 months of occasional use, the casing of one of the male plugs "
    "just fell apart in my hand as I was plugging it in. I did not apply "
    "undue force when it happened. After closer inspection, I could see how "
    "weak the plastic was -- tiny, brittle plastic clips hold the case "
    "together. I might have been able to glue or tape it back together, but "
    "given that it charges $500 phones, not worth the risk of a short.  "
    "There is a diode and and two wires soldered inside the housing that "
    "broke that could easilly short circuit.  I do not recommend this "
    "product if you value the items you are charging.\n\n"
    "Explanation for truthful prediction: [reason1] Firsthand experience: "
    "The reviewer shares a personal account of using the product over three "
    "months, offering a credible, real-world perspective rather than "
    "speculation. [reason2] Safety concerns explained logically: The "
    "reviewer points out that the internal wiring and diode were exposed "
    "after the casing broke, increasing the risk of a short circuit.\n\n"
    "Review: I was looking to downsize from an otterbox defender (whose "
    "holster's clip failed after one year) and this fits the bill nicely. "
    "Unlike the defender, the outside of the case is hard so it slides "
    "around (and in and out of your pocket) easily. You also don't have to "
    "open and close littler rubber doors to gain access to the headphone "
    "jack and charging/syncing port. The only hassle is that the rubber "
    "lining around the headphone jack wouldn't allow some of my older cheap "
    "cords or my good sony MDR 7506 headphones to plug in. Trimming the "
    "rubber solved the cheap cord problems but I had to replace the cord on "
    "the sonys with a hacked media bridge cord with a stepped plug on it.\n\n"
    "Explanation for deceptive prediction: [reason1] Minimizes major flaws: "
    "The review glosses over a serious issue \xe2\x80\x94 the case blocks "
    "headphone and charging ports \xe2\x80\x94 by treating it as a minor "
    "fix. [reason2] Shifts blame: Suggests the problem is due to 'older "
    "cheap cords' rather than a design flaw, misleading readers.\n\n";

TaskSpec make_review_task(std::string id, std::string one_shot) {
  TaskSpec t;
  t.id = std::move(id);
  t.positive_label = "Truthful";
  t.negative_label = "Deceptive";
  t.question_template = std::string(kQuestionTemplate);
  t.explain_template_positive = std::string(kExplainTruthful);
  t.explain_template_negative = std::string(kExplainDeceptive);
  t.prior_template = std::string(kPriorTemplate);
  t.one_shot = std::move(one_shot);
  return t;
}

}  // namespace

const std::string& TaskSpec::other_label(std::string_view answer) const {
  if (answer == positive_label) return negative_label;
  if (answer == negative_label) return positive_label;
  throw DomainError("unknown answer label: " + std::string(answer));
}

std::string render_template(
    std::string_view tmpl,
    std::span<const std::pair<std::string, std::string>> slots) {
  std::string out(tmpl);
  for (const auto& [name, value] : slots) {
    const std::string marker = "{" + name + "}";
    std::size_t pos = 0;
    while ((pos = out.find(marker, pos)) != std::string::npos) {
      out.replace(pos, marker.size(), value);
      pos += value.size();
    }
  }
  return out;
}

std::string render_question(const TaskSpec& task, std::string_view review) {
  const std::pair<std::string, std::string> slots[] = {
      {"review", std::string(review)}};
  return render_template(task.question_template, slots);
}

std::string render_explain_prompt(const TaskSpec& task, std::string_view review,
                                  std::string_view answer) {
  const std::string* tmpl = nullptr;
  if (answer == task.positive_label) {
    tmpl = &task.explain_template_positive;
  } else if (answer == task.negative_label) {
    tmpl = &task.explain_template_negative;
  } else {
    throw DomainError("unknown answer label: " + std::string(answer));
  }
  const std::pair<std::string, std::string> slots[] = {
      {"review", std::string(review)}};
  return task.one_shot + render_template(*tmpl, slots);
}

std::string render_adjusted_prompt(const PromptVariant& variant,
                                   std::string_view review,
                                   std::string_view explanation) {
  const std::pair<std::string, std::string> slots[] = {
      {"review", std::string(review)},
      {"explanation", std::string(explanation)}};
  return render_template(variant.template_text, slots);
}

std::string render_prior_prompt(const TaskSpec& task, std::string_view review) {
  const std::pair<std::string, std::string> slots[] = {
      {"review", std::string(review)}};
  return render_template(task.prior_template, slots);
}

std::string render_student_response(std::string_view answer,
                                    std::string_view explanation) {
  const std::pair<std::string, std::string> slots[] = {
      {"answer", std::string(answer)},
      {"explanation", std::string(explanation)}};
  return render_template(kResponseTemplate, slots);
}

std::pair<std::string, std::string> parse_student_response(
    std::string_view text) {
  constexpr std::string_view prefix = "Answer: ";
  constexpr std::string_view sep = ". Analysis: ";
  if (text.substr(0, prefix.size()) != prefix) {
    throw DomainError("student response does not start with answer cue");
  }
  const std::size_t sep_pos = text.find(sep, prefix.size());
  if (sep_pos == std::string_view::npos) {
    throw DomainError("student response missing analysis separator");
  }
  std::string answer(text.substr(prefix.size(), sep_pos - prefix.size()));
  std::string explanation(text.substr(sep_pos + sep.size()));
  for (std::string_view forbidden : {"Answer:", "Analysis:"}) {
    if (explanation.find(forbidden) != std::string::npos) {
      throw DomainError("explanation contains the reserved delimiter '" +
                        std::string(forbidden) + "'");
    }
    if (answer.find(forbidden) != std::string::npos) {
      throw DomainError("answer contains the reserved delimiter '" +
                        std::string(forbidden) + "'");
    }
  }
  return {std::move(answer), std::move(explanation)};
}

namespace {

// Matches `text` against a template: literal segments must appear in order,
// slot values are the spans between them. The first literal is anchored at
// the start, the last at the end. Returns false when the shape differs.
bool match_template(std::string_view tmpl, std::string_view text,
                    std::vector<std::pair<std::string, std::string>>& out) {
  out.clear();
  std::vector<std::string> literals;
  std::vector<std::string> slot_names;
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const std::size_t open = tmpl.find('{', pos);
    if (open == std::string_view::npos) {
      literals.emplace_back(tmpl.substr(pos));
      break;
    }
    const std::size_t close = tmpl.find('}', open);
    if (close == std::string_view::npos) {
      literals.emplace_back(tmpl.substr(pos));
      break;
    }
    literals.emplace_back(tmpl.substr(pos, open - pos));
    slot_names.emplace_back(tmpl.substr(open + 1, close - open - 1));
    pos = close + 1;
  }
  if (pos == tmpl.size() && literals.size() == slot_names.size()) {
    literals.emplace_back("");  // template ends with a slot
  }

  std::size_t cursor = 0;
  if (text.substr(0, literals[0].size()) != literals[0]) return false;
  cursor = literals[0].size();
  for (std::size_t s = 0; s < slot_names.size(); ++s) {
    const std::string& next_lit = literals[s + 1];
    std::size_t end;
    if (s + 1 == slot_names.size()) {
      // Final slot: anchor the last literal at the end of the text.
      if (next_lit.empty()) {
        end = text.size();
      } else {
        if (text.size() < cursor + next_lit.size()) return false;
        end = text.size() - next_lit.size();
        if (text.substr(end) != next_lit) return false;
      }
    } else {
      end = text.find(next_lit, cursor);
      if (end == std::string_view::npos) return false;
    }
    if (end < cursor) return false;
    out.emplace_back(slot_names[s], std::string(text.substr(cursor, end - cursor)));
    cursor = end + next_lit.size();
  }
  return cursor == text.size();
}

}  // namespace

std::optional<ParsedPrompt> parse_prompt(const TaskSpec& task,
                                         std::span<const PromptVariant> variants,
                                         std::string_view text) {
  if (!task.one_shot.empty() &&
      text.substr(0, task.one_shot.size()) == task.one_shot) {
    text.remove_prefix(task.one_shot.size());
  }

  std::vector<std::pair<std::string, std::string>> slots;
  const auto slot = [&](std::string_view name) -> std::string {
    for (const auto& [n, v] : slots) {
      if (n == name) return v;
    }
    return {};
  };

  ParsedPrompt parsed;
  if (match_template(task.explain_template_positive, text, slots)) {
    parsed.kind = ParsedPrompt::Kind::explain_request;
    parsed.review = slot("review");
    parsed.answer = task.positive_label;
    return parsed;
  }
  if (match_template(task.explain_template_negative, text, slots)) {
    parsed.kind = ParsedPrompt::Kind::explain_request;
    parsed.review = slot("review");
    parsed.answer = task.negative_label;
    return parsed;
  }
  for (const PromptVariant& variant : variants) {
    if (match_template(variant.template_text, text, slots)) {
      parsed.kind = ParsedPrompt::Kind::adjusted_query;
      parsed.review = slot("review");
      parsed.explanation = slot("explanation");
      parsed.variant_id = variant.id;
      return parsed;
    }
  }
  if (match_template(task.prior_template, text, slots)) {
    parsed.kind = ParsedPrompt::Kind::prior_query;
    parsed.review = slot("review");
    return parsed;
  }
  if (match_template(task.question_template, text, slots)) {
    parsed.kind = ParsedPrompt::Kind::bare_question;
    parsed.review = slot("review");
    return parsed;
  }
  return std::nullopt;
}

TaskSpec builtin_task(std::string_view id) {
  if (id == "tripadvisor") return make_review_task("tripadvisor", kHotelOneShot);
  if (id == "amazon") return make_review_task("amazon", kAmazonOneShot);
  if (id == "toy") return make_review_task("toy", "");  // zero-shot
  throw ConfigError("unknown task id: " + std::string(id));
}

std::vector<PromptVariant> builtin_variants() {
  return {
      {"default", std::string(kAdjustedDefault)},
      {"V1", std::string(kAdjustedV1)},
      {"V2", std::string(kAdjustedV2)},
      {"V3", std::string(kAdjustedV3)},
  };
}

const PromptVariant& find_variant(std::span<const PromptVariant> variants,
                                  std::string_view id) {
  for (const PromptVariant& v : variants) {
    if (v.id == id) return v;
  }
  throw DomainError("unknown prompt variant: " + std::string(id));
}

TemplateSet load_template_manifest(const std::filesystem::path& manifest_path) {
  const Json manifest = Json::parse(read_file(manifest_path));
  const std::filesystem::path base = manifest_path.parent_path();
  const auto load = [&](const std::string& rel) {
    return read_file(base / rel);
  };

  TemplateSet set;
  for (const auto& [task_id, entry] : manifest.at("tasks").items()) {
    TaskSpec t;
    t.id = task_id;
    t.positive_label = entry.at("labels").at(0).get<std::string>();
    t.negative_label = entry.at("labels").at(1).get<std::string>();
    t.question_template = load(entry.at("question").get<std::string>());
    t.explain_template_positive =
        load(entry.at("explain_positive").get<std::string>());
    t.explain_template_negative =
        load(entry.at("explain_negative").get<std::string>());
    t.prior_template = load(entry.at("prior").get<std::string>());
    if (entry.contains("one_shot")) {
      t.one_shot = load(entry.at("one_shot").get<std::string>());
    }
    set.tasks.push_back(std::move(t));
  }
  for (const auto& [variant_id, rel] : manifest.at("variants").items()) {
    set.variants.push_back({variant_id, load(rel.get<std::string>())});
  }
  if (manifest.contains("response")) {
    set.response_template = load(manifest.at("response").get<std::string>());
  }
  return set;
}

}  // namespace pex::prompting
