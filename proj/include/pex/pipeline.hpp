#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "pex/backend.hpp"
#include "pex/datasets.hpp"
#include "pex/io.hpp"
#include "pex/preference.hpp"
#include "pex/prompting.hpp"
#include "pex/sampler.hpp"
#include "pex/sim_eval.hpp"
#include "pex/toy_optimizer.hpp"

namespace pex::pipeline {

// Backend descriptor -> instance. Kinds: tabular {path}, softmax-toy {path},
// remote {endpoint, cache_dir, ...}. Relative paths resolve against
// base_dir. Remote endpoint/credential fall back to the PEX_ENDPOINT and
// PEX_API_KEY environment variables.
std::unique_ptr<LmBackend> make_backend(const Json& descriptor,
                                        const std::filesystem::path& base_dir);

// One reproducible run: a configuration snapshot plus derived stage
// settings. Serialized as config.json in the run directory.
struct RunConfig {
  std::string task_id = "toy";
  std::string template_manifest;  // optional fixture-file task source
  std::uint64_t seed = 0;
  std::string stamp = "1970-01-01T00:00:00Z";  // written into records
  int jobs = 1;

  std::string input_path;
  std::string input_format = "csv";
  datasets::SchemaMapping schema;
  datasets::SplitSpec split;

  Json teacher_backend;  // prediction + sampling oracle
  Json scorer_backend;   // consistency scoring backend

  std::vector<sampler::SamplingStage> sampling_stages = {{40, 1.0}, {40, 1.2}};
  std::size_t max_tokens = 256;

  std::string variant = "adjusted";
  std::string prompt_variant = "default";
  bool allow_zero = false;

  preference::SelectionPolicy selection;

  toy::DpoConfig dpo{0.1, 0.5, 200, 0};
  int sft_epochs = 40;
  double sft_learning_rate = 0.5;

  simeval::SimRunConfig sim;
  std::string stats_variant = "sequence";  // scoring of system explanations
  int stats_resamples = 2000;
  std::string reference_results_path;  // optional published-metrics JSON

  static RunConfig from_json(const Json& j);
  Json to_json() const;
  static RunConfig load(const std::filesystem::path& path);
};

// Stage runner over a run directory with the layout
//   config.json manifest.json data/ scores/ prefs/ checkpoints/ results/
//   report/
// Stages are idempotent: a stage whose inputs and outputs hash-match the
// manifest is skipped.
class Run {
 public:
  Run(std::filesystem::path run_dir, RunConfig config);

  void ingest();
  void split();
  void sample();
  void score();
  void rank();
  void build_prefs();
  void train_toy();
  void eval_sim();
  void stats();
  void report();

  // ingest through report in pipeline order.
  void run_all();

  const RunConfig& config() const { return config_; }
  const std::filesystem::path& dir() const { return run_dir_; }
  const prompting::TaskSpec& task() const { return task_; }

  // Stage console notes ("skipped", counts); collected for the CLI.
  const std::vector<std::string>& log() const { return log_; }

 private:
  struct StageIo {
    std::vector<std::filesystem::path> inputs;
    std::vector<std::filesystem::path> outputs;
  };
  bool skip_if_current(const std::string& stage, const StageIo& io);
  void finish_stage(const std::string& stage, const StageIo& io,
                    const Json& info = Json::object());
  void note(std::string message);

  std::vector<datasets::ReviewExample> load_split(std::string_view split_name);
  std::vector<sampler::ReviewRef> refs_of(
      const std::vector<datasets::ReviewExample>& examples) const;

  std::filesystem::path run_dir_;
  RunConfig config_;
  prompting::TaskSpec task_;
  std::vector<prompting::PromptVariant> variants_;
  std::vector<std::string> log_;
};

}  // namespace pex::pipeline
