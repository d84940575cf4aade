#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pex/backend.hpp"
#include "pex/prompting.hpp"
#include "pex/sampler.hpp"
#include "pex/toy_optimizer.hpp"

namespace pex::simeval {

// One teacher output: prediction a_T plus the explanation e_T generated to
// justify it. Pred-only systems carry an empty explanation.
struct TeacherRecord {
  std::string review_id;
  std::string answer;
  std::string explanation;
  std::string system;

  Json to_json() const;
  static TeacherRecord from_json(const Json& j);
};

struct SimRunConfig {
  std::vector<std::size_t> k_values = {10, 20};
  int passes = 5;
  std::map<std::size_t, int> epochs_by_k = {{10, 100}, {20, 50}};
  int default_epochs = 100;
  double learning_rate = 0.1;
  std::uint64_t seed = 0;
  // When set, student training is delegated: the command runs with
  // "{trainset}" and "{checkpoint}" substituted, and must write a softmax
  // checkpoint consumable by the scoring interface.
  std::string external_trainer_command;
  std::filesystem::path work_dir;  // scratch for the external hook
};

struct SimResult {
  std::string system;
  std::size_t k = 0;
  std::vector<double> pass_f1;
  double mean_f1 = 0.0;
  double ci95_half_width = 0.0;  // Student-t across passes
};

// Teacher predictions via answer log-odds on the answer-cue prompt
// (argmax; ties resolve to the positive label), explanations sampled from
// `explainer` at temperature 1. explainer == nullptr produces pred-only
// records with empty explanations.
std::vector<TeacherRecord> build_teacher_records(
    const LmBackend& predictor, const LmBackend* explainer,
    const prompting::TaskSpec& task,
    std::span<const sampler::ReviewRef> reviews, std::string_view system_tag,
    std::uint64_t seed, std::size_t max_tokens = 256);

// Seeded k-subset without replacement rendered as
// (question, "Answer: a. Analysis: e") pairs, answer first.
std::vector<toy::SequenceExample> build_student_trainset(
    std::span<const TeacherRecord> records,
    std::span<const sampler::ReviewRef> reviews,
    const prompting::TaskSpec& task, std::size_t k, std::uint64_t pass_seed);

// Binary F1 with `positive_label` as the positive class; empty denominators
// count as zero.
double f1_score(std::span<const std::string> predictions,
                std::span<const std::string> references,
                std::string_view positive_label);

// Student predictions by label log-odds on the bare question (ties resolve
// to the positive label), F1 against the teacher's test predictions with
// "Deceptive"-style negative label as positive class. Gold labels never
// enter this path. The leakage guard raises a hard error when any test
// prompt contains "Analysis:" or any nonempty guarded explanation.
double evaluate_student(const LmBackend& student,
                        const prompting::TaskSpec& task,
                        std::span<const sampler::ReviewRef> test_reviews,
                        std::span<const TeacherRecord> teacher_test_predictions,
                        std::span<const std::string> guarded_explanations = {});

struct MatrixSystem {
  std::string name;
  std::vector<TeacherRecord> train_records;     // validation-split teacher data
  std::vector<TeacherRecord> test_predictions;  // test-split teacher answers
};

// Full simulatability matrix: per (system, k), five-pass student training
// and evaluation. All systems must cover identical review id sets so the
// comparison is paired; pass subsets are seeded by (seed, k, pass) only,
// so identical systems produce identical rows.
std::vector<SimResult> run_matrix(std::span<const MatrixSystem> systems,
                                  const prompting::TaskSpec& task,
                                  std::span<const sampler::ReviewRef> train_reviews,
                                  std::span<const sampler::ReviewRef> test_reviews,
                                  const SimRunConfig& config);

// system,model,k,pass,f1 rows.
std::string results_to_csv(std::span<const SimResult> results,
                           std::string_view model_name);

}  // namespace pex::simeval
