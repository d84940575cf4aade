#pragma once

#include <span>
#include <string>
#include <vector>

#include "pex/errors.hpp"
#include "pex/preference.hpp"
#include "pex/softmax_lm.hpp"

namespace pex::toy {

// Shared training configuration. beta only matters for the DPO objective;
// batch_size 0 means full batch.
struct DpoConfig {
  double beta = 0.1;
  double learning_rate = 0.1;
  int epochs = 1;
  std::size_t batch_size = 0;
};

// (prompt, target) pair scored under teacher forcing.
struct SequenceExample {
  std::string prompt;
  std::string target;
};

struct LossReport {
  double loss = 0.0;
  GradTable gradient;
  std::vector<double> pair_margins;  // DPO: beta * (delta_w - delta_l)
  double mean_margin = 0.0;
};

// Supervised answer-prediction objective: loss = sum of -log M(a | q) over
// the dataset, targets scored as given (no terminator). Gradient is the
// analytic softmax cross-entropy over the parameter table.
LossReport sft_loss_and_grad(const SoftmaxLm& model,
                             std::span<const SequenceExample> data);

// Word-level response imitation: loss = sum over examples and positions of
// -log M(R_n | R_<n, q). Same machinery as SFT with multi-token targets.
LossReport student_mle_loss_and_grad(const SoftmaxLm& model,
                                     std::span<const SequenceExample> data);

// Preference objective: loss = -mean log sigmoid(beta * ((log pi(e_w) -
// log ref(e_w)) - (log pi(e_l) - log ref(e_l)))). Completions are scored as
// complete sequences (terminator included). Gradients are with respect to
// the policy table only; the reference is frozen.
LossReport dpo_loss_and_grad(const SoftmaxLm& policy,
                             const SoftmaxLm& reference,
                             std::span<const preference::PreferencePair> pairs,
                             const DpoConfig& config);

enum class Objective { sft, dpo, student_mle };

Objective objective_from_name(std::string_view name);
std::string_view objective_name(Objective objective);

struct TrainSpec {
  Objective objective = Objective::sft;
  std::vector<SequenceExample> sequences;         // sft / student_mle
  std::vector<preference::PreferencePair> pairs;  // dpo
  const SoftmaxLm* reference = nullptr;           // dpo
};

struct TraceRow {
  int epoch = 0;
  double loss = 0.0;
  double mean_margin = 0.0;
};

struct TrainResult {
  SoftmaxLm model;
  std::vector<TraceRow> trace;  // pre-step loss per epoch plus a final row
};

// Training diverged (non-finite loss); carries the last finite state.
struct DivergenceError : DomainError {
  DivergenceError(std::string message, SoftmaxLm last, TraceRow last_row)
      : DomainError(std::move(message)),
        last_good(std::move(last)),
        at(last_row) {}
  SoftmaxLm last_good;
  TraceRow at;
};

// Plain gradient descent, deterministic given the data order. Trace rows
// record the loss at the start of each epoch and one final row after the
// last step.
TrainResult train(SoftmaxLm model, const TrainSpec& spec,
                  const DpoConfig& config);

// epoch,loss,mean_margin CSV.
std::string trace_to_csv(std::span<const TraceRow> trace);

}  // namespace pex::toy
