#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pex/io.hpp"
#include "pex/sim_eval.hpp"
#include "pex/stats.hpp"

namespace pex::report {

struct NamedDistribution {
  std::string name;
  stats::DistributionSummary summary;
};

struct CorrelationRow {
  std::string pair;  // e.g. "V1 vs V2"
  double tau = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double ci_level = 0.90;
};

struct SignificanceRow {
  std::string baseline;
  std::string candidate;
  double baseline_mean = 0.0;
  double candidate_mean = 0.0;
  double t = 0.0;
  double p = 0.0;
  bool significant = false;  // p < 0.05
};

struct ReportInputs {
  std::vector<NamedDistribution> distributions;  // score-distribution shape
  std::vector<CorrelationRow> correlations;      // prompt-variant agreement
  std::vector<simeval::SimResult> simulation;    // simulatability table
  std::vector<SignificanceRow> significance;     // candidate-vs-baseline tests
  std::string model_name = "toy";
  Json reference;  // published reference metrics, echoed verbatim if present
};

// Writes index.html plus CSV tables (distribution_summary.csv,
// variant_correlations.csv, simulation_results.csv, significance.csv) into
// `dir`. Output is deterministic for fixed inputs.
void write_report(const std::filesystem::path& dir, const ReportInputs& inputs);

}  // namespace pex::report
