// Command-line front end: each subcommand drives one pipeline stage over a
// shared run directory, `run` executes the whole chain. Exit codes:
// 0 success, 2 config error, 3 backend/transport error, 4 data validation
// error.

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "pex/errors.hpp"
#include "pex/manifest.hpp"
#include "pex/pipeline.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string run_dir = "run";
  std::string task;
  std::string stamp;
  int jobs = 0;
  bool has_seed = false;
  std::uint64_t seed = 0;
};

pex::pipeline::RunConfig load_config(const CommonArgs& args) {
  pex::pipeline::RunConfig config;
  if (!args.config_path.empty()) {
    config = pex::pipeline::RunConfig::load(args.config_path);
  } else {
    const auto existing =
        std::filesystem::path(args.run_dir) / "config.json";
    if (std::filesystem::exists(existing)) {
      config = pex::pipeline::RunConfig::load(existing);
    } else {
      throw pex::ConfigError(
          "no configuration: pass --config or use a run dir with config.json");
    }
  }
  if (!args.task.empty()) config.task_id = args.task;
  if (!args.stamp.empty()) config.stamp = args.stamp;
  if (args.jobs > 0) config.jobs = args.jobs;
  if (args.has_seed) {
    config.seed = args.seed;
    config.split.seed = args.seed;
    config.selection.seed = args.seed;
    config.sim.seed = args.seed;
  }
  return config;
}

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path,
                  "Run configuration JSON (defaults to <run-dir>/config.json)");
  cmd->add_option("--run-dir", args.run_dir, "Run directory")
      ->capture_default_str();
  cmd->add_option("--task", args.task,
                  "Task id override (toy, tripadvisor, amazon)");
  cmd->add_option("--stamp", args.stamp,
                  "Timestamp written into records (fixed for reproducible runs)");
  cmd->add_option("--jobs", args.jobs, "Stage-internal worker threads");
  cmd->add_option("--seed", args.seed, "Global seed override")
      ->each([&args](const std::string&) { args.has_seed = true; });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Explanation-consistency toolkit: weight-of-evidence scoring, "
      "preference-dataset construction, toy preference training, and "
      "teacher-student simulatability evaluation"};
  app.require_subcommand(1);

  CommonArgs args;

  struct {
    std::string variant;
    std::string prompt_variant;
    double p = -1.0;
    long long pairs = -1;
    bool zero_straddle = false;
    bool no_zero_straddle = false;
    std::vector<std::size_t> samples_per_stage;
    std::vector<double> temperatures;
    std::string input;
    std::string format;
  } flags;

  CLI::App* ingest = app.add_subcommand("ingest", "Read and validate a corpus");
  ingest->add_option("--input", flags.input, "Corpus file (csv or jsonl)");
  ingest->add_option("--format", flags.format, "Input format: csv | jsonl");

  CLI::App* split =
      app.add_subcommand("split", "Assign train/validation/test splits");

  CLI::App* sample = app.add_subcommand(
      "sample", "Sample explanations from the teacher for the train split");
  sample->add_option("--samples-per-stage", flags.samples_per_stage,
                     "Per-stage sample counts (with --temperatures)");
  sample->add_option("--temperatures", flags.temperatures,
                     "Per-stage sampling temperatures");

  CLI::App* score =
      app.add_subcommand("score", "Compute consistency scores for samples");
  score->add_option("--variant", flags.variant,
                    "Scoring variant: adjusted | sequence");
  score->add_option("--prompt-variant", flags.prompt_variant,
                    "Adjusted-prompt format: default | V1 | V2 | V3");

  CLI::App* rank = app.add_subcommand(
      "rank", "Rank scored explanations per (review, answer)");

  CLI::App* build_prefs = app.add_subcommand(
      "build-prefs", "Select preference pairs from ranked explanations");
  build_prefs->add_option(
      "--p", flags.p, "Top/bottom pool fraction (e.g. 0.10)");
  build_prefs->add_option("--pairs", flags.pairs, "Pairs per example");
  build_prefs->add_flag("--zero-straddle", flags.zero_straddle,
                        "Keep only pairs with chosen > 0 > rejected");
  build_prefs->add_flag("--no-zero-straddle", flags.no_zero_straddle,
                        "Disable the zero-straddle filter");

  CLI::App* train_toy = app.add_subcommand(
      "train-toy", "Fit the toy reference model and preference-train a policy");
  CLI::App* eval_sim = app.add_subcommand(
      "eval-sim", "Teacher-student simulatability evaluation");
  CLI::App* stats =
      app.add_subcommand("stats", "Distribution, sensitivity and significance");
  CLI::App* report =
      app.add_subcommand("report", "Render the HTML + CSV report");
  CLI::App* run = app.add_subcommand("run", "Run the full pipeline");

  for (CLI::App* cmd : {ingest, split, sample, score, rank, build_prefs,
                        train_toy, eval_sim, stats, report, run}) {
    add_common(cmd, args);
  }

  CLI11_PARSE(app, argc, argv);

  try {
    pex::pipeline::RunConfig config = load_config(args);

    // Subcommand flag overrides on top of the config snapshot.
    if (!flags.input.empty()) config.input_path = flags.input;
    if (!flags.format.empty()) config.input_format = flags.format;
    if (!flags.variant.empty()) config.variant = flags.variant;
    if (!flags.prompt_variant.empty()) {
      config.prompt_variant = flags.prompt_variant;
    }
    if (flags.p > 0.0) {
      config.selection.top_fraction = flags.p;
      config.selection.bottom_fraction = flags.p;
    }
    if (flags.pairs > 0) {
      config.selection.pairs_per_example = static_cast<std::size_t>(flags.pairs);
    }
    if (flags.zero_straddle) config.selection.zero_straddle = true;
    if (flags.no_zero_straddle) config.selection.zero_straddle = false;
    if (!flags.samples_per_stage.empty()) {
      if (flags.temperatures.size() != flags.samples_per_stage.size()) {
        throw pex::ConfigError(
            "--samples-per-stage and --temperatures must have equal length");
      }
      config.sampling_stages.clear();
      for (std::size_t i = 0; i < flags.samples_per_stage.size(); ++i) {
        config.sampling_stages.push_back(
            {flags.samples_per_stage[i], flags.temperatures[i]});
      }
    }

    pex::pipeline::Run pipeline_run(args.run_dir, std::move(config));
    if (ingest->parsed()) pipeline_run.ingest();
    if (split->parsed()) pipeline_run.split();
    if (sample->parsed()) pipeline_run.sample();
    if (score->parsed()) pipeline_run.score();
    if (rank->parsed()) pipeline_run.rank();
    if (build_prefs->parsed()) pipeline_run.build_prefs();
    if (train_toy->parsed()) pipeline_run.train_toy();
    if (eval_sim->parsed()) pipeline_run.eval_sim();
    if (stats->parsed()) pipeline_run.stats();
    if (report->parsed()) pipeline_run.report();
    if (run->parsed()) pipeline_run.run_all();

    for (const std::string& line : pipeline_run.log()) {
      std::cout << line << "\n";
    }
    return 0;
  } catch (const pex::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const pex::TransportError& e) {
    std::cerr << "backend error: " << e.what() << "\n";
    return 3;
  } catch (const pex::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 4;
  } catch (const pex::DomainError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
