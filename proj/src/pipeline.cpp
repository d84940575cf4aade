#include "pex/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <map>
#include <set>

#include "pex/consistency.hpp"
#include "pex/errors.hpp"
#include "pex/manifest.hpp"
#include "pex/remote_lm.hpp"
#include "pex/report.hpp"
#include "pex/rng.hpp"
#include "pex/softmax_lm.hpp"
#include "pex/stats.hpp"
#include "pex/tabular_lm.hpp"

namespace pex::pipeline {

namespace fs = std::filesystem;

std::unique_ptr<LmBackend> make_backend(const Json& descriptor,
                                        const fs::path& base_dir) {
  if (!descriptor.is_object() || !descriptor.contains("kind")) {
    throw ConfigError("backend descriptor needs a \"kind\"");
  }
  const std::string kind = descriptor.at("kind").get<std::string>();
  const auto resolve = [&](const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  if (kind == "tabular") {
    return std::make_unique<TabularLm>(
        TabularLm::load(resolve(descriptor.at("path").get<std::string>())));
  }
  if (kind == "softmax-toy") {
    return std::make_unique<toy::SoftmaxLm>(
        toy::SoftmaxLm::load(resolve(descriptor.at("path").get<std::string>())));
  }
  if (kind == "remote") {
    RemoteConfig config;
    const char* env_endpoint = std::getenv("PEX_ENDPOINT");
    const char* env_key = std::getenv("PEX_API_KEY");
    config.endpoint = descriptor.value(
        "endpoint", env_endpoint != nullptr ? std::string(env_endpoint)
                                            : std::string());
    if (config.endpoint.empty()) {
      throw ConfigError(
          "remote backend needs \"endpoint\" or the PEX_ENDPOINT variable");
    }
    config.api_key = descriptor.value(
        "api_key", env_key != nullptr ? std::string(env_key) : std::string());
    config.model_id = descriptor.value("model_id", std::string("remote"));
    config.max_in_flight = descriptor.value("max_in_flight", 4);
    config.max_retries = descriptor.value("max_retries", 3);
    config.backoff_base_ms = descriptor.value("backoff_base_ms", 100);
    if (descriptor.contains("cache_dir")) {
      config.cache_dir = resolve(descriptor.at("cache_dir").get<std::string>());
    }
    return std::make_unique<RemoteLm>(std::move(config));
  }
  throw ConfigError("unknown backend kind: " + kind);
}

RunConfig RunConfig::from_json(const Json& j) {
  RunConfig c;
  c.task_id = j.value("task", std::string("toy"));
  c.template_manifest = j.value("template_manifest", std::string());
  c.seed = j.value("seed", std::uint64_t{0});
  c.stamp = j.value("stamp", std::string("1970-01-01T00:00:00Z"));
  c.jobs = j.value("jobs", 1);

  if (j.contains("data")) {
    const Json& d = j.at("data");
    c.input_path = d.value("input", std::string());
    c.input_format = d.value("format", std::string("csv"));
    c.schema.id_column = d.value("id_column", std::string("id"));
    c.schema.text_column = d.value("text_column", std::string("text"));
    c.schema.label_column = d.value("label_column", std::string("label"));
    if (d.contains("label_values")) {
      c.schema.label_values =
          d.at("label_values").get<std::map<std::string, std::string>>();
    }
    if (d.contains("fractions")) {
      c.split.train_fraction = d.at("fractions").at(0).get<double>();
      c.split.validation_fraction = d.at("fractions").at(1).get<double>();
      c.split.test_fraction = d.at("fractions").at(2).get<double>();
    }
    c.split.min_word_count = d.value("min_words", std::size_t{0});
    c.split.per_class_cap = d.value("per_class_cap", std::size_t{0});
    c.split.seed = c.seed;
  }

  if (j.contains("backends")) {
    const Json& b = j.at("backends");
    if (b.contains("teacher")) c.teacher_backend = b.at("teacher");
    if (b.contains("scorer")) c.scorer_backend = b.at("scorer");
  }

  if (j.contains("sampling")) {
    const Json& s = j.at("sampling");
    if (s.contains("stages")) {
      c.sampling_stages.clear();
      for (const Json& stage : s.at("stages")) {
        c.sampling_stages.push_back({stage.at("count").get<std::size_t>(),
                                     stage.at("temperature").get<double>()});
      }
    }
    c.max_tokens = s.value("max_tokens", std::size_t{256});
  }

  if (j.contains("scoring")) {
    const Json& s = j.at("scoring");
    c.variant = s.value("variant", std::string("adjusted"));
    c.prompt_variant = s.value("prompt_variant", std::string("default"));
    c.allow_zero = s.value("allow_zero", false);
  }

  if (j.contains("selection")) {
    const Json& s = j.at("selection");
    c.selection.top_fraction = s.value("top_fraction", 0.10);
    c.selection.bottom_fraction = s.value("bottom_fraction", 0.10);
    c.selection.pairs_per_example = s.value("pairs_per_example", std::size_t{8});
    c.selection.zero_straddle = s.value("zero_straddle", true);
    c.selection.seed = c.seed;
  }

  if (j.contains("train")) {
    const Json& t = j.at("train");
    c.dpo.beta = t.value("beta", 0.1);
    c.dpo.learning_rate = t.value("learning_rate", 0.5);
    c.dpo.epochs = t.value("epochs", 200);
    c.dpo.batch_size = t.value("batch_size", std::size_t{0});
    c.sft_epochs = t.value("sft_epochs", 40);
    c.sft_learning_rate = t.value("sft_learning_rate", 0.5);
  }

  if (j.contains("sim")) {
    const Json& s = j.at("sim");
    if (s.contains("k_values")) {
      c.sim.k_values = s.at("k_values").get<std::vector<std::size_t>>();
    }
    c.sim.passes = s.value("passes", 5);
    if (s.contains("epochs_by_k")) {
      c.sim.epochs_by_k.clear();
      for (const auto& [k, epochs] : s.at("epochs_by_k").items()) {
        c.sim.epochs_by_k[std::stoul(k)] = epochs.get<int>();
      }
    }
    c.sim.default_epochs = s.value("default_epochs", 100);
    c.sim.learning_rate = s.value("learning_rate", 0.1);
    c.sim.external_trainer_command =
        s.value("external_trainer_command", std::string());
    c.sim.seed = c.seed;
  } else {
    c.sim.seed = c.seed;
  }

  if (j.contains("stats")) {
    const Json& s = j.at("stats");
    c.stats_variant = s.value("variant", std::string("sequence"));
    c.stats_resamples = s.value("resamples", 2000);
  }
  c.reference_results_path = j.value("reference_results", std::string());
  return c;
}

Json RunConfig::to_json() const {
  Json j;
  j["task"] = task_id;
  if (!template_manifest.empty()) j["template_manifest"] = template_manifest;
  j["seed"] = seed;
  j["stamp"] = stamp;
  j["jobs"] = jobs;
  Json d;
  d["input"] = input_path;
  d["format"] = input_format;
  d["id_column"] = schema.id_column;
  d["text_column"] = schema.text_column;
  d["label_column"] = schema.label_column;
  if (!schema.label_values.empty()) d["label_values"] = schema.label_values;
  d["fractions"] = {split.train_fraction, split.validation_fraction,
                    split.test_fraction};
  d["min_words"] = split.min_word_count;
  d["per_class_cap"] = split.per_class_cap;
  j["data"] = d;
  j["backends"] = Json{{"teacher", teacher_backend}, {"scorer", scorer_backend}};
  Json stages = Json::array();
  for (const auto& stage : sampling_stages) {
    stages.push_back(
        Json{{"count", stage.count}, {"temperature", stage.temperature}});
  }
  j["sampling"] = Json{{"stages", stages}, {"max_tokens", max_tokens}};
  j["scoring"] = Json{{"variant", variant},
                      {"prompt_variant", prompt_variant},
                      {"allow_zero", allow_zero}};
  j["selection"] = Json{{"top_fraction", selection.top_fraction},
                        {"bottom_fraction", selection.bottom_fraction},
                        {"pairs_per_example", selection.pairs_per_example},
                        {"zero_straddle", selection.zero_straddle}};
  j["train"] = Json{{"beta", dpo.beta},
                    {"learning_rate", dpo.learning_rate},
                    {"epochs", dpo.epochs},
                    {"batch_size", dpo.batch_size},
                    {"sft_epochs", sft_epochs},
                    {"sft_learning_rate", sft_learning_rate}};
  Json epochs_by_k = Json::object();
  for (const auto& [k, epochs] : sim.epochs_by_k) {
    epochs_by_k[std::to_string(k)] = epochs;
  }
  Json s;
  s["k_values"] = sim.k_values;
  s["passes"] = sim.passes;
  s["epochs_by_k"] = epochs_by_k;
  s["default_epochs"] = sim.default_epochs;
  s["learning_rate"] = sim.learning_rate;
  if (!sim.external_trainer_command.empty()) {
    s["external_trainer_command"] = sim.external_trainer_command;
  }
  j["sim"] = s;
  j["stats"] = Json{{"variant", stats_variant}, {"resamples", stats_resamples}};
  if (!reference_results_path.empty()) {
    j["reference_results"] = reference_results_path;
  }
  return j;
}

RunConfig RunConfig::load(const fs::path& path) {
  RunConfig config;
  try {
    config = from_json(Json::parse(read_file(path)));
  } catch (const Json::exception& e) {
    throw ConfigError("invalid config " + path.string() + ": " + e.what());
  }
  // Relative paths in a config file are relative to the file itself; the
  // run-dir snapshot then carries absolute paths so stages resolve
  // consistently no matter where they are launched from.
  const fs::path base = fs::absolute(path).parent_path();
  const auto absolutize = [&base](std::string& p) {
    if (!p.empty() && fs::path(p).is_relative()) {
      p = (base / p).lexically_normal().string();
    }
  };
  absolutize(config.input_path);
  absolutize(config.template_manifest);
  absolutize(config.reference_results_path);
  for (Json* backend : {&config.teacher_backend, &config.scorer_backend}) {
    if (backend->is_object() && backend->contains("path")) {
      std::string p = backend->at("path").get<std::string>();
      absolutize(p);
      (*backend)["path"] = p;
    }
  }
  return config;
}

Run::Run(fs::path run_dir, RunConfig config)
    : run_dir_(std::move(run_dir)), config_(std::move(config)) {
  if (!config_.template_manifest.empty()) {
    const auto set =
        prompting::load_template_manifest(config_.template_manifest);
    bool found = false;
    for (const prompting::TaskSpec& t : set.tasks) {
      if (t.id == config_.task_id) {
        task_ = t;
        found = true;
        break;
      }
    }
    if (!found) {
      throw ConfigError("task '" + config_.task_id +
                        "' not present in template manifest");
    }
    variants_ = set.variants.empty() ? prompting::builtin_variants()
                                     : set.variants;
  } else {
    task_ = prompting::builtin_task(config_.task_id);
    variants_ = prompting::builtin_variants();
  }

  fs::create_directories(run_dir_);
  for (const char* sub :
       {"data", "scores", "prefs", "checkpoints", "results", "report"}) {
    fs::create_directories(run_dir_ / sub);
  }
  atomic_write_file(run_dir_ / "config.json", config_.to_json().dump(2) + "\n");
}

void Run::note(std::string message) { log_.push_back(std::move(message)); }

bool Run::skip_if_current(const std::string& stage, const StageIo& io) {
  manifest::RunManifest m(run_dir_);
  StageIo full = io;
  full.inputs.push_back(run_dir_ / "config.json");
  if (m.stage_up_to_date(stage, full.inputs, full.outputs)) {
    note(stage + ": up to date, skipped");
    return true;
  }
  return false;
}

void Run::finish_stage(const std::string& stage, const StageIo& io,
                       const Json& info) {
  manifest::RunManifest m(run_dir_);
  StageIo full = io;
  full.inputs.push_back(run_dir_ / "config.json");
  m.record_stage(stage, full.inputs, full.outputs, info);
}

std::vector<datasets::ReviewExample> Run::load_split(
    std::string_view split_name) {
  auto examples = datasets::read_canonical(run_dir_ / "data" / "splits.jsonl");
  std::erase_if(examples, [&](const datasets::ReviewExample& ex) {
    return ex.split != split_name;
  });
  return examples;
}

std::vector<sampler::ReviewRef> Run::refs_of(
    const std::vector<datasets::ReviewExample>& examples) const {
  std::vector<sampler::ReviewRef> refs;
  refs.reserve(examples.size());
  for (const auto& ex : examples) refs.push_back({ex.id, ex.text});
  return refs;
}

void Run::ingest() {
  const fs::path input(config_.input_path);
  const fs::path output = run_dir_ / "data" / "reviews.jsonl";
  const StageIo io{{input}, {output}};
  if (skip_if_current("ingest", io)) return;

  const auto examples = datasets::ingest(
      input, datasets::format_from_name(config_.input_format), config_.schema,
      task_, config_.split);
  datasets::write_canonical(output, examples);
  note("ingest: " + std::to_string(examples.size()) + " examples");
  finish_stage("ingest", io, Json{{"count", examples.size()}});
}

void Run::split() {
  const fs::path input = run_dir_ / "data" / "reviews.jsonl";
  const fs::path output = run_dir_ / "data" / "splits.jsonl";
  const StageIo io{{input}, {output}};
  if (skip_if_current("split", io)) return;

  auto examples = datasets::read_canonical(input);
  datasets::assign_splits(examples, config_.split);
  datasets::write_canonical(output, examples);
  std::map<std::string, std::size_t> counts;
  for (const auto& ex : examples) ++counts[ex.split];
  Json info;
  for (const auto& [name, count] : counts) info[name] = count;
  note("split: train/validation/test = " + std::to_string(counts["train"]) +
       "/" + std::to_string(counts["validation"]) + "/" +
       std::to_string(counts["test"]));
  finish_stage("split", io, info);
}

void Run::sample() {
  const fs::path input = run_dir_ / "data" / "splits.jsonl";
  const fs::path output = run_dir_ / "scores" / "samples.jsonl";
  const StageIo io{{input}, {output}};
  if (skip_if_current("sample", io)) return;

  const auto train = load_split("train");
  const auto teacher = make_backend(config_.teacher_backend, run_dir_);

  sampler::SamplingSchedule schedule;
  schedule.stages = config_.sampling_stages;
  schedule.base_seed = config_.seed;
  schedule.max_tokens = config_.max_tokens;

  // Teacher prediction then sampling, parallel over reviews, output in
  // review order.
  std::vector<std::vector<Json>> per_review(train.size());
  parallel_for(train.size(), config_.jobs, [&](std::size_t i) {
    const auto& ex = train[i];
    const double logodds = answer_logodds(
        *teacher, prompting::render_prior_prompt(task_, ex.text),
        task_.positive_label, task_.negative_label);
    const std::string answer =
        logodds >= 0.0 ? task_.positive_label : task_.negative_label;
    const auto batch = sampler::sample_batch(*teacher, task_, {ex.id, ex.text},
                                             answer, schedule);
    for (const sampler::Explanation& e : batch) {
      per_review[i].push_back(Json{{"review_id", e.review_id},
                                   {"answer", e.answer},
                                   {"explanation", e.text},
                                   {"temperature", e.temperature},
                                   {"seed", e.seed},
                                   {"stage", e.stage_index},
                                   {"sample_index", e.sample_index},
                                   {"truncated", e.truncated},
                                   {"backend_id", teacher->id()},
                                   {"timestamp", config_.stamp}});
    }
  });
  std::vector<Json> lines;
  for (auto& group : per_review) {
    for (auto& line : group) lines.push_back(std::move(line));
  }
  write_jsonl(output, lines);
  note("sample: " + std::to_string(lines.size()) + " explanations");
  finish_stage("sample", io, Json{{"count", lines.size()}});
}

void Run::score() {
  const fs::path splits = run_dir_ / "data" / "splits.jsonl";
  const fs::path input = run_dir_ / "scores" / "samples.jsonl";
  const fs::path output = run_dir_ / "scores" / "scored.jsonl";
  const StageIo io{{splits, input}, {output}};
  if (skip_if_current("score", io)) return;

  const auto samples = read_jsonl(input);
  const auto scorer = make_backend(config_.scorer_backend, run_dir_);
  const auto examples = datasets::read_canonical(splits);
  std::map<std::string, std::string> texts;
  for (const auto& ex : examples) texts[ex.id] = ex.text;

  const consistency::Variant variant =
      consistency::variant_from_name(config_.variant);
  const prompting::PromptVariant& prompt_variant =
      prompting::find_variant(variants_, config_.prompt_variant);
  ScoreOptions opts;
  opts.allow_zero = config_.allow_zero;

  std::vector<Json> lines(samples.size());
  parallel_for(samples.size(), config_.jobs, [&](std::size_t i) {
    const Json& sample = samples[i];
    const std::string review_id = sample.at("review_id").get<std::string>();
    auto it = texts.find(review_id);
    if (it == texts.end()) {
      throw DataError("sampled record references unknown review " + review_id);
    }
    const std::string answer = sample.at("answer").get<std::string>();
    const std::string explanation =
        sample.at("explanation").get<std::string>();
    const consistency::ConsistencyScore score =
        variant == consistency::Variant::adjusted
            ? consistency::pex_adjusted(*scorer, task_, it->second, answer,
                                        explanation, prompt_variant, opts)
            : consistency::pex_sequence(*scorer, task_, it->second, answer,
                                        explanation, opts);
    consistency::ScoredRecord rec;
    rec.review_id = review_id;
    rec.answer = answer;
    rec.explanation = explanation;
    rec.variant = std::string(consistency::variant_name(score.variant));
    rec.prompt_variant = score.prompt_variant;
    rec.score = score.value;
    rec.posterior_logodds = score.lhs;
    rec.prior_logodds = score.rhs;
    rec.backend_id = scorer->id();
    rec.timestamp = config_.stamp;
    rec.extra = Json{{"temperature", sample.value("temperature", 1.0)},
                     {"seed", sample.value("seed", std::uint64_t{0})},
                     {"stage", sample.value("stage", std::size_t{0})},
                     {"sample_index", sample.value("sample_index", std::size_t{0})},
                     {"truncated", sample.value("truncated", false)}};
    lines[i] = rec.to_json();
  });
  write_jsonl(output, lines);
  note("score: " + std::to_string(lines.size()) + " records (" +
       config_.variant + ", " + config_.prompt_variant + ")");
  finish_stage("score", io, Json{{"count", lines.size()}});
}

namespace {

sampler::Explanation explanation_from_record(
    const consistency::ScoredRecord& rec) {
  sampler::Explanation e;
  e.review_id = rec.review_id;
  e.answer = rec.answer;
  e.text = rec.explanation;
  e.temperature = rec.extra.value("temperature", 1.0);
  e.seed = rec.extra.value("seed", std::uint64_t{0});
  e.stage_index = rec.extra.value("stage", std::size_t{0});
  e.sample_index = rec.extra.value("sample_index", std::size_t{0});
  e.truncated = rec.extra.value("truncated", false);
  consistency::ConsistencyScore score;
  score.value = rec.score;
  score.variant = consistency::variant_from_name(rec.variant);
  score.prompt_variant = rec.prompt_variant;
  score.lhs = rec.posterior_logodds;
  score.rhs = rec.prior_logodds;
  e.score = score;
  return e;
}

}  // namespace

void Run::rank() {
  const fs::path input = run_dir_ / "scores" / "scored.jsonl";
  const fs::path output = run_dir_ / "scores" / "ranked.jsonl";
  const StageIo io{{input}, {output}};
  if (skip_if_current("rank", io)) return;

  std::map<std::pair<std::string, std::string>, std::vector<sampler::Explanation>>
      groups;
  std::map<std::pair<std::string, std::string>, std::vector<consistency::ScoredRecord>>
      records;
  for (const Json& line : read_jsonl(input)) {
    const auto rec = consistency::ScoredRecord::from_json(line);
    const auto key = std::make_pair(rec.review_id, rec.answer);
    groups[key].push_back(explanation_from_record(rec));
    records[key].push_back(rec);
  }

  std::vector<Json> lines;
  for (auto& [key, group] : groups) {
    const auto ranked = sampler::rank(std::move(group));
    for (std::size_t pos = 0; pos < ranked.size(); ++pos) {
      // Re-emit the stored record for this sample with its rank attached.
      for (const consistency::ScoredRecord& rec : records[key]) {
        if (rec.extra.value("sample_index", std::size_t{0}) ==
            ranked[pos].sample_index) {
          Json line = rec.to_json();
          line["rank"] = pos;
          lines.push_back(std::move(line));
          break;
        }
      }
    }
  }
  write_jsonl(output, lines);
  note("rank: " + std::to_string(groups.size()) + " groups");
  finish_stage("rank", io, Json{{"groups", groups.size()}});
}

void Run::build_prefs() {
  const fs::path splits = run_dir_ / "data" / "splits.jsonl";
  const fs::path input = run_dir_ / "scores" / "ranked.jsonl";
  const fs::path output = run_dir_ / "prefs" / "pairs.jsonl";
  const fs::path manifest_out = run_dir_ / "prefs" / "manifest.json";
  const StageIo io{{splits, input}, {output, manifest_out}};
  if (skip_if_current("build-prefs", io)) return;

  std::map<std::string, std::string> texts;
  for (const auto& ex : datasets::read_canonical(splits)) {
    texts[ex.id] = ex.text;
  }
  std::map<std::pair<std::string, std::string>, std::vector<sampler::Explanation>>
      groups;
  for (const Json& line : read_jsonl(input)) {
    const auto rec = consistency::ScoredRecord::from_json(line);
    groups[{rec.review_id, rec.answer}].push_back(explanation_from_record(rec));
  }

  preference::SelectionPolicy policy = config_.selection;
  policy.seed = config_.seed;
  std::vector<preference::PreferencePair> pairs;
  std::size_t truncated_groups = 0;
  for (auto& [key, group] : groups) {
    const auto ranked = sampler::rank(std::move(group));
    const auto pools = preference::select_pools(ranked, policy);
    if (pools.truncated_overlap) ++truncated_groups;
    auto it = texts.find(key.first);
    if (it == texts.end()) {
      throw DataError("ranked record references unknown review " + key.first);
    }
    const auto group_pairs = preference::build_pairs(
        pools, task_, {key.first, it->second}, key.second, policy);
    pairs.insert(pairs.end(), group_pairs.begin(), group_pairs.end());
  }

  const std::string source_ids[] = {manifest::file_hash(input)};
  preference::emit_dataset(pairs, output, manifest_out, policy, source_ids);
  note("build-prefs: " + std::to_string(pairs.size()) + " pairs from " +
       std::to_string(groups.size()) + " groups" +
       (truncated_groups > 0
            ? " (" + std::to_string(truncated_groups) + " pools truncated)"
            : ""));
  finish_stage("build-prefs", io,
               Json{{"pairs", pairs.size()}, {"groups", groups.size()}});
}

void Run::train_toy() {
  const fs::path splits = run_dir_ / "data" / "splits.jsonl";
  const fs::path samples = run_dir_ / "scores" / "samples.jsonl";
  const fs::path pairs_path = run_dir_ / "prefs" / "pairs.jsonl";
  const fs::path reference_out = run_dir_ / "checkpoints" / "reference.json";
  const fs::path policy_out = run_dir_ / "checkpoints" / "policy.json";
  const fs::path sft_trace_out = run_dir_ / "checkpoints" / "sft_trace.csv";
  const fs::path dpo_trace_out = run_dir_ / "checkpoints" / "dpo_trace.csv";
  const StageIo io{{splits, samples, pairs_path},
                   {reference_out, policy_out, sft_trace_out, dpo_trace_out}};
  if (skip_if_current("train-toy", io)) return;

  const auto examples = datasets::read_canonical(splits);
  std::map<std::string, std::string> texts;
  for (const auto& ex : examples) texts[ex.id] = ex.text;

  // Behaviour-clone the sampled explanations: (Q(q, a_T), e + terminator).
  std::vector<toy::SequenceExample> sft_data;
  std::vector<std::string> corpus;
  for (const Json& line : read_jsonl(samples)) {
    const std::string review_id = line.at("review_id").get<std::string>();
    const std::string answer = line.at("answer").get<std::string>();
    const std::string explanation = line.at("explanation").get<std::string>();
    auto it = texts.find(review_id);
    if (it == texts.end()) {
      throw DataError("sampled record references unknown review " + review_id);
    }
    const std::string prompt =
        prompting::render_explain_prompt(task_, it->second, answer);
    sft_data.push_back(
        {prompt, explanation + " " + std::string(toy::kTerminator)});
  }
  // Vocabulary must cover every prompt the model will see downstream:
  // explanation prompts for all reviews and both labels, response scaffolds,
  // and the bare questions used at evaluation time.
  for (const auto& ex : examples) {
    corpus.push_back(prompting::render_explain_prompt(task_, ex.text,
                                                      task_.positive_label));
    corpus.push_back(prompting::render_explain_prompt(task_, ex.text,
                                                      task_.negative_label));
    corpus.push_back(prompting::render_question(task_, ex.text));
  }
  for (const auto& ex : sft_data) corpus.push_back(ex.target);
  corpus.push_back(prompting::render_student_response(task_.positive_label, ""));
  corpus.push_back(prompting::render_student_response(task_.negative_label, ""));
  corpus.push_back(task_.positive_label);
  corpus.push_back(task_.negative_label);

  toy::SoftmaxLm reference(toy::SoftmaxLm::build_vocabulary(corpus),
                           "softmax-sft");
  toy::TrainSpec sft_spec;
  sft_spec.objective = toy::Objective::student_mle;
  sft_spec.sequences = sft_data;
  toy::DpoConfig sft_config;
  sft_config.learning_rate = config_.sft_learning_rate;
  sft_config.epochs = config_.sft_epochs;
  toy::TrainResult sft_result = toy::train(std::move(reference), sft_spec,
                                           sft_config);
  atomic_write_file(sft_trace_out, toy::trace_to_csv(sft_result.trace));

  const auto raw_pairs = preference::read_dataset(pairs_path);
  toy::SoftmaxLm policy = sft_result.model;  // initialized from the reference
  policy.set_model_id("softmax-dpo");
  toy::TrainResult dpo_result{std::move(policy), {}};
  if (!raw_pairs.empty()) {
    toy::TrainSpec dpo_spec;
    dpo_spec.objective = toy::Objective::dpo;
    dpo_spec.pairs = raw_pairs;
    dpo_spec.reference = &sft_result.model;
    dpo_result = toy::train(std::move(dpo_result.model), dpo_spec, config_.dpo);
  } else {
    note("train-toy: no preference pairs, policy equals reference");
  }
  atomic_write_file(dpo_trace_out, toy::trace_to_csv(dpo_result.trace));

  atomic_write_file(reference_out, sft_result.model.to_json().dump() + "\n");
  atomic_write_file(policy_out, dpo_result.model.to_json().dump() + "\n");
  Json info;
  info["sft_examples"] = sft_data.size();
  info["dpo_pairs"] = raw_pairs.size();
  if (!sft_result.trace.empty()) {
    info["sft_final_loss"] = sft_result.trace.back().loss;
  }
  if (!dpo_result.trace.empty()) {
    info["dpo_final_loss"] = dpo_result.trace.back().loss;
    info["dpo_final_margin"] = dpo_result.trace.back().mean_margin;
  }
  note("train-toy: sft on " + std::to_string(sft_data.size()) +
       " sequences, dpo on " + std::to_string(raw_pairs.size()) + " pairs");
  finish_stage("train-toy", io, info);
}

void Run::eval_sim() {
  const fs::path splits = run_dir_ / "data" / "splits.jsonl";
  const fs::path reference_in = run_dir_ / "checkpoints" / "reference.json";
  const fs::path policy_in = run_dir_ / "checkpoints" / "policy.json";
  const fs::path results_out = run_dir_ / "results" / "simulation.json";
  const fs::path csv_out = run_dir_ / "results" / "simulation.csv";
  const fs::path records_out = run_dir_ / "results" / "teacher_records.jsonl";
  const StageIo io{{splits, reference_in, policy_in},
                   {results_out, csv_out, records_out}};
  if (skip_if_current("eval-sim", io)) return;

  const auto validation = refs_of(load_split("validation"));
  const auto test = refs_of(load_split("test"));
  const auto teacher = make_backend(config_.teacher_backend, run_dir_);
  const toy::SoftmaxLm reference = toy::SoftmaxLm::load(reference_in);
  const toy::SoftmaxLm policy = toy::SoftmaxLm::load(policy_in);

  const struct {
    const char* name;
    const LmBackend* explainer;
  } system_defs[] = {
      {"pred-only", nullptr},
      {"sft", &reference},
      {"dpo", &policy},
  };

  std::vector<simeval::MatrixSystem> systems;
  std::vector<Json> record_lines;
  for (const auto& def : system_defs) {
    simeval::MatrixSystem system;
    system.name = def.name;
    system.train_records = simeval::build_teacher_records(
        *teacher, def.explainer, task_, validation, def.name,
        stable_hash(config_.seed, "teacher", def.name), config_.max_tokens);
    system.test_predictions = simeval::build_teacher_records(
        *teacher, nullptr, task_, test, def.name,
        stable_hash(config_.seed, "teacher-test", def.name),
        config_.max_tokens);
    for (const auto& rec : system.train_records) {
      record_lines.push_back(rec.to_json());
    }
    systems.push_back(std::move(system));
  }
  write_jsonl(records_out, record_lines);

  simeval::SimRunConfig sim = config_.sim;
  sim.work_dir = run_dir_ / "results" / "students";
  const auto results =
      simeval::run_matrix(systems, task_, validation, test, sim);

  Json results_json = Json::array();
  for (const simeval::SimResult& row : results) {
    results_json.push_back(Json{{"system", row.system},
                                {"k", row.k},
                                {"pass_f1", row.pass_f1},
                                {"mean_f1", row.mean_f1},
                                {"ci95_half_width", row.ci95_half_width}});
  }
  atomic_write_file(results_out, results_json.dump(2) + "\n");
  atomic_write_file(csv_out, simeval::results_to_csv(results, teacher->id()));
  note("eval-sim: " + std::to_string(results.size()) + " result rows");
  finish_stage("eval-sim", io, Json{{"rows", results.size()}});
}

void Run::stats() {
  const fs::path splits = run_dir_ / "data" / "splits.jsonl";
  const fs::path scored = run_dir_ / "scores" / "scored.jsonl";
  const fs::path records_in = run_dir_ / "results" / "teacher_records.jsonl";
  const fs::path reference_in = run_dir_ / "checkpoints" / "reference.json";
  const fs::path output = run_dir_ / "results" / "stats.json";
  const StageIo io{{splits, scored, records_in, reference_in}, {output}};
  if (skip_if_current("stats", io)) return;

  const auto examples = datasets::read_canonical(splits);
  std::map<std::string, std::string> texts;
  for (const auto& ex : examples) texts[ex.id] = ex.text;

  Json out;

  // Score distribution of the sampled-explanation corpus.
  std::vector<consistency::ScoredRecord> scored_records;
  for (const Json& line : read_jsonl(scored)) {
    scored_records.push_back(consistency::ScoredRecord::from_json(line));
  }
  Json distributions = Json::array();
  {
    std::vector<double> values;
    for (const auto& rec : scored_records) values.push_back(rec.score);
    const auto summary = stats::distribution_summary(values);
    distributions.push_back(Json{
        {"name", scored_records.empty() ? "samples"
                                        : scored_records.front().backend_id},
        {"count", summary.count},
        {"mean", summary.mean},
        {"ci95_half_width", summary.ci95_half_width},
        {"fraction_below_zero", summary.fraction_below},
        {"fraction_above_two", summary.fraction_above}});
  }

  // Prompt-format sensitivity: re-score a capped subsample under V1/V2/V3
  // and correlate.
  const auto scorer = make_backend(config_.scorer_backend, run_dir_);
  ScoreOptions opts;
  opts.allow_zero = config_.allow_zero;
  const std::array<std::string, 3> variant_ids = {"V1", "V2", "V3"};
  std::map<std::string, std::vector<double>> variant_scores;
  const std::size_t cap = 500;
  const std::size_t n_sub = std::min(cap, scored_records.size());
  for (const std::string& vid : variant_ids) {
    const prompting::PromptVariant& variant =
        prompting::find_variant(variants_, vid);
    std::vector<double> values(n_sub);
    parallel_for(n_sub, config_.jobs, [&](std::size_t i) {
      const auto& rec = scored_records[i];
      values[i] = consistency::pex_adjusted(*scorer, task_,
                                            texts.at(rec.review_id),
                                            rec.answer, rec.explanation,
                                            variant, opts)
                      .value;
    });
    variant_scores[vid] = std::move(values);
  }
  Json correlations = Json::array();
  for (std::size_t a = 0; a < variant_ids.size(); ++a) {
    for (std::size_t b = a + 1; b < variant_ids.size(); ++b) {
      const auto& x = variant_scores[variant_ids[a]];
      const auto& y = variant_scores[variant_ids[b]];
      const double tau = stats::kendall_tau(x, y);
      const auto ci = stats::bootstrap_ci(
          x, y,
          [](std::span<const double> rx, std::span<const double> ry) {
            return stats::kendall_tau(rx, ry);
          },
          0.90, config_.stats_resamples, stable_hash(config_.seed, "boot", a, b));
      correlations.push_back(Json{{"pair", variant_ids[a] + " vs " + variant_ids[b]},
                                  {"tau", tau},
                                  {"ci_lo", ci.lo},
                                  {"ci_hi", ci.hi},
                                  {"ci_level", 0.90}});
    }
  }

  // Per-system consistency of the teacher explanations, scored under the
  // behaviour-cloned reference model, paired by review for significance.
  const toy::SoftmaxLm reference = toy::SoftmaxLm::load(reference_in);
  std::map<std::string, std::map<std::string, double>> system_scores;
  for (const Json& line : read_jsonl(records_in)) {
    const auto rec = simeval::TeacherRecord::from_json(line);
    if (rec.explanation.empty()) continue;
    const consistency::ConsistencyScore score =
        config_.stats_variant == "adjusted"
            ? consistency::pex_adjusted(
                  reference, task_, texts.at(rec.review_id), rec.answer,
                  rec.explanation,
                  prompting::find_variant(variants_, config_.prompt_variant),
                  opts)
            : consistency::pex_sequence(reference, task_,
                                        texts.at(rec.review_id), rec.answer,
                                        rec.explanation, opts);
    system_scores[rec.system][rec.review_id] = score.value;
  }
  for (const auto& [system, by_review] : system_scores) {
    std::vector<double> values;
    for (const auto& [_, v] : by_review) values.push_back(v);
    if (values.empty()) continue;
    const auto summary = stats::distribution_summary(values);
    distributions.push_back(Json{{"name", system + " explanations"},
                                 {"count", summary.count},
                                 {"mean", summary.mean},
                                 {"ci95_half_width", summary.ci95_half_width},
                                 {"fraction_below_zero", summary.fraction_below},
                                 {"fraction_above_two", summary.fraction_above}});
  }

  Json significance = Json::array();
  if (system_scores.count("sft") != 0 && system_scores.count("dpo") != 0) {
    std::vector<double> sft_vals, dpo_vals;
    for (const auto& [review_id, sft_score] : system_scores.at("sft")) {
      auto it = system_scores.at("dpo").find(review_id);
      if (it == system_scores.at("dpo").end()) continue;
      sft_vals.push_back(sft_score);
      dpo_vals.push_back(it->second);
    }
    if (sft_vals.size() >= 2) {
      try {
        const auto t = stats::paired_t_test(dpo_vals, sft_vals);
        significance.push_back(
            Json{{"baseline", "sft"},
                 {"candidate", "dpo"},
                 {"baseline_mean", stats::detail::mean(sft_vals)},
                 {"candidate_mean", stats::detail::mean(dpo_vals)},
                 {"t", t.t},
                 {"p", t.p},
                 {"significant", t.p < 0.05}});
      } catch (const DomainError&) {
        // zero difference variance: no test to report
      }
    }
  }

  out["distributions"] = distributions;
  out["correlations"] = correlations;
  out["significance"] = significance;
  atomic_write_file(output, out.dump(2) + "\n");
  note("stats: " + std::to_string(distributions.size()) + " distributions, " +
       std::to_string(correlations.size()) + " correlations");
  finish_stage("stats", io);
}

void Run::report() {
  const fs::path stats_in = run_dir_ / "results" / "stats.json";
  const fs::path sim_in = run_dir_ / "results" / "simulation.json";
  const fs::path report_dir = run_dir_ / "report";
  const StageIo io{{stats_in, sim_in},
                   {report_dir / "index.html",
                    report_dir / "distribution_summary.csv",
                    report_dir / "variant_correlations.csv",
                    report_dir / "simulation_results.csv",
                    report_dir / "significance.csv"}};
  if (skip_if_current("report", io)) return;

  const Json stats_json = Json::parse(read_file(stats_in));
  const Json sim_json = Json::parse(read_file(sim_in));

  report::ReportInputs inputs;
  inputs.model_name = config_.task_id;
  for (const Json& d : stats_json.at("distributions")) {
    report::NamedDistribution nd;
    nd.name = d.at("name").get<std::string>();
    nd.summary.count = d.at("count").get<std::size_t>();
    nd.summary.mean = d.at("mean").get<double>();
    nd.summary.ci95_half_width = d.at("ci95_half_width").get<double>();
    nd.summary.fraction_below = d.at("fraction_below_zero").get<double>();
    nd.summary.fraction_above = d.at("fraction_above_two").get<double>();
    inputs.distributions.push_back(std::move(nd));
  }
  for (const Json& c : stats_json.at("correlations")) {
    inputs.correlations.push_back(report::CorrelationRow{
        c.at("pair").get<std::string>(), c.at("tau").get<double>(),
        c.at("ci_lo").get<double>(), c.at("ci_hi").get<double>(),
        c.at("ci_level").get<double>()});
  }
  for (const Json& s : stats_json.at("significance")) {
    inputs.significance.push_back(report::SignificanceRow{
        s.at("baseline").get<std::string>(), s.at("candidate").get<std::string>(),
        s.at("baseline_mean").get<double>(), s.at("candidate_mean").get<double>(),
        s.at("t").get<double>(), s.at("p").get<double>(),
        s.at("significant").get<bool>()});
  }
  for (const Json& row : sim_json) {
    simeval::SimResult r;
    r.system = row.at("system").get<std::string>();
    r.k = row.at("k").get<std::size_t>();
    r.pass_f1 = row.at("pass_f1").get<std::vector<double>>();
    r.mean_f1 = row.at("mean_f1").get<double>();
    r.ci95_half_width = row.at("ci95_half_width").get<double>();
    inputs.simulation.push_back(std::move(r));
  }
  if (!config_.reference_results_path.empty()) {
    inputs.reference =
        Json::parse(read_file(config_.reference_results_path));
  }
  report::write_report(report_dir, inputs);
  note("report: written to " + report_dir.string());
  finish_stage("report", io);
}

void Run::run_all() {
  ingest();
  split();
  sample();
  score();
  rank();
  build_prefs();
  train_toy();
  eval_sim();
  stats();
  report();
}

}  // namespace pex::pipeline
