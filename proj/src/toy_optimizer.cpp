#include "pex/toy_optimizer.hpp"

#include <cmath>
#include <sstream>

#include "pex/errors.hpp"

namespace pex::toy {

namespace {

double softplus(double x) {
  // log(1 + e^x), stable on both tails
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

LossReport sequence_sum_nll(const SoftmaxLm& model,
                            std::span<const SequenceExample> data) {
  if (data.empty()) throw DomainError("loss: empty dataset");
  LossReport report;
  for (const SequenceExample& ex : data) {
    const std::vector<int> prompt_ids = model.encode(ex.prompt);
    const std::vector<int> target_ids = model.encode(ex.target);
    if (target_ids.empty()) throw DomainError("loss: empty target sequence");
    report.loss += model.sequence_nll(prompt_ids, target_ids,
                                      /*include_terminator=*/false,
                                      &report.gradient, 1.0);
  }
  return report;
}

}  // namespace

LossReport sft_loss_and_grad(const SoftmaxLm& model,
                             std::span<const SequenceExample> data) {
  return sequence_sum_nll(model, data);
}

LossReport student_mle_loss_and_grad(const SoftmaxLm& model,
                                     std::span<const SequenceExample> data) {
  return sequence_sum_nll(model, data);
}

LossReport dpo_loss_and_grad(const SoftmaxLm& policy,
                             const SoftmaxLm& reference,
                             std::span<const preference::PreferencePair> pairs,
                             const DpoConfig& config) {
  if (pairs.empty()) throw DomainError("dpo loss: empty pair list");
  if (config.beta <= 0.0) throw DomainError("dpo loss: beta must be positive");

  LossReport report;
  const double inv_n = 1.0 / static_cast<double>(pairs.size());
  for (const preference::PreferencePair& pair : pairs) {
    const std::vector<int> prompt_pol = policy.encode(pair.prompt);
    const std::vector<int> chosen_pol = policy.encode(pair.chosen);
    const std::vector<int> rejected_pol = policy.encode(pair.rejected);
    const std::vector<int> prompt_ref = reference.encode(pair.prompt);
    const std::vector<int> chosen_ref = reference.encode(pair.chosen);
    const std::vector<int> rejected_ref = reference.encode(pair.rejected);

    const double lw_pol = -policy.sequence_nll(prompt_pol, chosen_pol, true);
    const double ll_pol = -policy.sequence_nll(prompt_pol, rejected_pol, true);
    const double lw_ref = -reference.sequence_nll(prompt_ref, chosen_ref, true);
    const double ll_ref = -reference.sequence_nll(prompt_ref, rejected_ref, true);

    const double margin =
        config.beta * ((lw_pol - lw_ref) - (ll_pol - ll_ref));
    report.pair_margins.push_back(margin);
    report.loss += inv_n * softplus(-margin);

    // dL/dmargin = -sigmoid(-margin); chain through the two policy terms.
    const double coeff = inv_n * sigmoid(-margin) * config.beta;
    policy.sequence_nll(prompt_pol, chosen_pol, true, &report.gradient, coeff);
    policy.sequence_nll(prompt_pol, rejected_pol, true, &report.gradient,
                        -coeff);
  }
  double sum = 0.0;
  for (double m : report.pair_margins) sum += m;
  report.mean_margin = sum / static_cast<double>(report.pair_margins.size());
  return report;
}

Objective objective_from_name(std::string_view name) {
  if (name == "sft") return Objective::sft;
  if (name == "dpo") return Objective::dpo;
  if (name == "student-mle" || name == "student_mle") {
    return Objective::student_mle;
  }
  throw ConfigError("unknown objective: " + std::string(name));
}

std::string_view objective_name(Objective objective) {
  switch (objective) {
    case Objective::sft:
      return "sft";
    case Objective::dpo:
      return "dpo";
    case Objective::student_mle:
      return "student-mle";
  }
  return "sft";
}

namespace {

LossReport evaluate(const SoftmaxLm& model, const TrainSpec& spec,
                    const DpoConfig& config, std::size_t begin,
                    std::size_t end) {
  switch (spec.objective) {
    case Objective::sft:
      return sft_loss_and_grad(
          model, std::span<const SequenceExample>(spec.sequences)
                     .subspan(begin, end - begin));
    case Objective::student_mle:
      return student_mle_loss_and_grad(
          model, std::span<const SequenceExample>(spec.sequences)
                     .subspan(begin, end - begin));
    case Objective::dpo:
      if (spec.reference == nullptr) {
        throw DomainError("dpo training requires a frozen reference model");
      }
      return dpo_loss_and_grad(
          model, *spec.reference,
          std::span<const preference::PreferencePair>(spec.pairs)
              .subspan(begin, end - begin),
          config);
  }
  throw DomainError("unknown objective");
}

}  // namespace

TrainResult train(SoftmaxLm model, const TrainSpec& spec,
                  const DpoConfig& config) {
  if (config.epochs < 0) throw DomainError("train: negative epoch count");
  if (config.learning_rate < 0.0) {
    throw DomainError("train: negative learning rate");
  }
  const std::size_t n = spec.objective == Objective::dpo
                            ? spec.pairs.size()
                            : spec.sequences.size();
  if (n == 0) throw DomainError("train: empty dataset");
  const std::size_t batch = config.batch_size == 0 ? n : config.batch_size;

  TrainResult result{std::move(model), {}};
  // Last state whose full-data loss evaluated finite, kept for the
  // divergence report.
  SoftmaxLm last_good = result.model;
  TraceRow last_row{0, 0.0, 0.0};
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    // Full-data loss recorded before the epoch's steps.
    const LossReport epoch_report = evaluate(result.model, spec, config, 0, n);
    if (!std::isfinite(epoch_report.loss)) {
      throw DivergenceError("training diverged at epoch " +
                                std::to_string(epoch),
                            std::move(last_good), last_row);
    }
    last_good = result.model;
    last_row = TraceRow{epoch, epoch_report.loss, epoch_report.mean_margin};
    result.trace.push_back(last_row);

    for (std::size_t begin = 0; begin < n; begin += batch) {
      const std::size_t end = std::min(n, begin + batch);
      const LossReport step = begin == 0 && end == n
                                  ? epoch_report
                                  : evaluate(result.model, spec, config, begin, end);
      result.model.apply_gradient(step.gradient, -config.learning_rate);
    }
  }

  const LossReport final_report = evaluate(result.model, spec, config, 0, n);
  if (!std::isfinite(final_report.loss)) {
    throw DivergenceError("training diverged on the final step",
                          std::move(last_good), last_row);
  }
  result.trace.push_back(
      TraceRow{config.epochs, final_report.loss, final_report.mean_margin});
  return result;
}

std::string trace_to_csv(std::span<const TraceRow> trace) {
  std::ostringstream out;
  out << "epoch,loss,mean_margin\n";
  out.precision(17);
  for (const TraceRow& row : trace) {
    out << row.epoch << "," << row.loss << "," << row.mean_margin << "\n";
  }
  return out.str();
}

}  // namespace pex::toy
