#include "pex/sim_eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <set>
#include <sstream>

#include "pex/errors.hpp"
#include "pex/rng.hpp"
#include "pex/stats.hpp"

namespace pex::simeval {

Json TeacherRecord::to_json() const {
  return Json{{"review_id", review_id},
              {"answer", answer},
              {"explanation", explanation},
              {"system", system}};
}

TeacherRecord TeacherRecord::from_json(const Json& j) {
  return TeacherRecord{j.at("review_id").get<std::string>(),
                       j.at("answer").get<std::string>(),
                       j.at("explanation").get<std::string>(),
                       j.value("system", std::string())};
}

std::vector<TeacherRecord> build_teacher_records(
    const LmBackend& predictor, const LmBackend* explainer,
    const prompting::TaskSpec& task,
    std::span<const sampler::ReviewRef> reviews, std::string_view system_tag,
    std::uint64_t seed, std::size_t max_tokens) {
  std::vector<TeacherRecord> records;
  records.reserve(reviews.size());
  for (const sampler::ReviewRef& review : reviews) {
    TeacherRecord rec;
    rec.review_id = review.id;
    rec.system = std::string(system_tag);
    const double logodds = answer_logodds(
        predictor, prompting::render_prior_prompt(task, review.text),
        task.positive_label, task.negative_label);
    rec.answer = logodds >= 0.0 ? task.positive_label : task.negative_label;
    if (explainer != nullptr) {
      const std::string prompt =
          prompting::render_explain_prompt(task, review.text, rec.answer);
      rec.explanation =
          explainer
              ->sample(prompt, 1.0,
                       stable_hash(seed, review.id, "teacher-explanation"),
                       max_tokens)
              .text;
    }
    records.push_back(std::move(rec));
  }
  return records;
}

namespace {

std::map<std::string, std::string> review_text_index(
    std::span<const sampler::ReviewRef> reviews) {
  std::map<std::string, std::string> index;
  for (const sampler::ReviewRef& r : reviews) index[r.id] = r.text;
  return index;
}

}  // namespace

std::vector<toy::SequenceExample> build_student_trainset(
    std::span<const TeacherRecord> records,
    std::span<const sampler::ReviewRef> reviews,
    const prompting::TaskSpec& task, std::size_t k, std::uint64_t pass_seed) {
  if (k > records.size()) {
    throw DomainError("trainset size k exceeds available teacher records");
  }
  const auto texts = review_text_index(reviews);
  std::vector<std::size_t> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng = make_rng(pass_seed);
  stable_shuffle(order, rng);

  std::vector<toy::SequenceExample> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    const TeacherRecord& rec = records[order[i]];
    auto it = texts.find(rec.review_id);
    if (it == texts.end()) {
      throw DomainError("teacher record references unknown review id: " +
                        rec.review_id);
    }
    out.push_back(toy::SequenceExample{
        prompting::render_question(task, it->second),
        prompting::render_student_response(rec.answer, rec.explanation)});
  }
  return out;
}

double f1_score(std::span<const std::string> predictions,
                std::span<const std::string> references,
                std::string_view positive_label) {
  if (predictions.size() != references.size()) {
    throw DomainError("f1_score: prediction/reference length mismatch");
  }
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const bool pred_pos = predictions[i] == positive_label;
    const bool ref_pos = references[i] == positive_label;
    if (pred_pos && ref_pos) ++tp;
    if (pred_pos && !ref_pos) ++fp;
    if (!pred_pos && ref_pos) ++fn;
  }
  const double precision =
      tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double recall =
      tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

double evaluate_student(const LmBackend& student,
                        const prompting::TaskSpec& task,
                        std::span<const sampler::ReviewRef> test_reviews,
                        std::span<const TeacherRecord> teacher_test_predictions,
                        std::span<const std::string> guarded_explanations) {
  std::map<std::string, std::string> reference;
  std::vector<std::string> guard(guarded_explanations.begin(),
                                 guarded_explanations.end());
  for (const TeacherRecord& rec : teacher_test_predictions) {
    reference[rec.review_id] = rec.answer;
    if (!rec.explanation.empty()) guard.push_back(rec.explanation);
  }

  std::vector<std::string> predictions, references;
  for (const sampler::ReviewRef& review : test_reviews) {
    const std::string prompt = prompting::render_question(task, review.text);
    if (prompt.find("Analysis:") != std::string::npos) {
      throw DomainError("leakage guard: test prompt carries analysis content");
    }
    for (const std::string& expl : guard) {
      if (!expl.empty() && prompt.find(expl) != std::string::npos) {
        throw DomainError(
            "leakage guard: teacher explanation text found in test prompt for "
            "review " + review.id);
      }
    }
    const double logodds =
        answer_logodds(student, prompt, task.positive_label,
                       task.negative_label);
    predictions.push_back(logodds >= 0.0 ? task.positive_label
                                         : task.negative_label);
    auto it = reference.find(review.id);
    if (it == reference.end()) {
      throw DomainError("no teacher prediction for test review " + review.id);
    }
    references.push_back(it->second);
  }
  // F1 against teacher predictions; positive class is the spam-side label.
  return f1_score(predictions, references, task.negative_label);
}

namespace {

void check_identical_coverage(std::span<const MatrixSystem> systems) {
  if (systems.empty()) throw DomainError("run_matrix: no systems");
  auto ids_of = [](std::span<const TeacherRecord> records) {
    std::set<std::string> ids;
    for (const TeacherRecord& rec : records) ids.insert(rec.review_id);
    return ids;
  };
  const auto train_ids = ids_of(systems.front().train_records);
  const auto test_ids = ids_of(systems.front().test_predictions);
  for (const MatrixSystem& system : systems) {
    if (ids_of(system.train_records) != train_ids ||
        ids_of(system.test_predictions) != test_ids) {
      throw DomainError(
          "run_matrix: systems do not cover identical review ids");
    }
  }
}

toy::SoftmaxLm train_student_external(
    const std::vector<toy::SequenceExample>& trainset,
    const SimRunConfig& config, std::uint64_t pass_seed) {
  namespace fs = std::filesystem;
  const fs::path dir = config.work_dir.empty() ? fs::temp_directory_path()
                                               : config.work_dir;
  fs::create_directories(dir);
  const std::string stem = "student-" + hash_hex(pass_seed);
  const fs::path trainset_path = dir / (stem + ".trainset.jsonl");
  const fs::path checkpoint_path = dir / (stem + ".checkpoint.json");

  std::vector<Json> lines;
  for (const toy::SequenceExample& ex : trainset) {
    lines.push_back(Json{{"prompt", ex.prompt}, {"response", ex.target}});
  }
  write_jsonl(trainset_path, lines);

  std::string command = config.external_trainer_command;
  const auto substitute = [&command](std::string_view slot,
                                     const std::string& value) {
    std::size_t pos;
    while ((pos = command.find(slot)) != std::string::npos) {
      command.replace(pos, slot.size(), value);
    }
  };
  substitute("{trainset}", trainset_path.string());
  substitute("{checkpoint}", checkpoint_path.string());
  const int status = std::system(command.c_str());
  if (status != 0) {
    throw Error("external trainer command failed with status " +
                std::to_string(status));
  }
  return toy::SoftmaxLm::load(checkpoint_path);
}

}  // namespace

std::vector<SimResult> run_matrix(std::span<const MatrixSystem> systems,
                                  const prompting::TaskSpec& task,
                                  std::span<const sampler::ReviewRef> train_reviews,
                                  std::span<const sampler::ReviewRef> test_reviews,
                                  const SimRunConfig& config) {
  check_identical_coverage(systems);
  if (config.passes < 1) throw DomainError("run_matrix: passes must be >= 1");

  std::vector<SimResult> results;
  for (const MatrixSystem& system : systems) {
    for (const std::size_t k : config.k_values) {
      if (k < 1) throw DomainError("run_matrix: k must be >= 1");
      auto epochs_it = config.epochs_by_k.find(k);
      const int epochs = epochs_it != config.epochs_by_k.end()
                             ? epochs_it->second
                             : config.default_epochs;

      SimResult row;
      row.system = system.name;
      row.k = k;
      for (int pass = 0; pass < config.passes; ++pass) {
        // Seeded by (seed, k, pass) only: every system sees the same
        // review subset in a given pass.
        const std::uint64_t pass_seed =
            stable_hash(config.seed, "sim-pass", k, pass);
        const std::vector<toy::SequenceExample> trainset =
            build_student_trainset(system.train_records, train_reviews, task,
                                   k, pass_seed);

        std::vector<std::string> guard;
        for (const TeacherRecord& rec : system.train_records) {
          if (!rec.explanation.empty()) guard.push_back(rec.explanation);
        }

        double f1;
        if (!config.external_trainer_command.empty()) {
          const toy::SoftmaxLm student =
              train_student_external(trainset, config, pass_seed);
          f1 = evaluate_student(student, task, test_reviews,
                                system.test_predictions, guard);
        } else {
          std::vector<std::string> corpus;
          for (const toy::SequenceExample& ex : trainset) {
            corpus.push_back(ex.prompt);
            corpus.push_back(ex.target);
          }
          for (const sampler::ReviewRef& review : test_reviews) {
            corpus.push_back(prompting::render_question(task, review.text));
          }
          corpus.push_back(task.positive_label);
          corpus.push_back(task.negative_label);
          toy::SoftmaxLm student(toy::SoftmaxLm::build_vocabulary(corpus),
                                 "student-" + system.name);

          toy::TrainSpec spec;
          spec.objective = toy::Objective::student_mle;
          spec.sequences = trainset;
          toy::DpoConfig train_config;
          train_config.learning_rate = config.learning_rate;
          train_config.epochs = epochs;
          toy::TrainResult trained =
              toy::train(std::move(student), spec, train_config);
          f1 = evaluate_student(trained.model, task, test_reviews,
                                system.test_predictions, guard);
        }
        row.pass_f1.push_back(f1);
      }

      row.mean_f1 = stats::detail::mean(row.pass_f1);
      if (row.pass_f1.size() >= 2) {
        const double sd = std::sqrt(stats::detail::sample_variance(row.pass_f1));
        const double tcrit = stats::detail::student_t_quantile(
            0.975, static_cast<double>(row.pass_f1.size() - 1));
        row.ci95_half_width =
            tcrit * sd / std::sqrt(static_cast<double>(row.pass_f1.size()));
      }
      results.push_back(std::move(row));
    }
  }
  return results;
}

std::string results_to_csv(std::span<const SimResult> results,
                           std::string_view model_name) {
  std::ostringstream out;
  out << "system,model,k,pass,f1\n";
  out.precision(17);
  for (const SimResult& row : results) {
    for (std::size_t pass = 0; pass < row.pass_f1.size(); ++pass) {
      out << row.system << "," << model_name << "," << row.k << "," << pass
          << "," << row.pass_f1[pass] << "\n";
    }
  }
  return out.str();
}

}  // namespace pex::simeval
