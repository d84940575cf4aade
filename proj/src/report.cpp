#include "pex/report.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

namespace pex::report {

namespace {

std::string fmt(double value, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, value);
  return buf;
}

std::string escape_html(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += "\"";
  return out;
}

std::string distribution_csv(const ReportInputs& in) {
  std::ostringstream out;
  out << "name,count,mean,ci95_half_width,fraction_below_zero,"
         "fraction_above_two\n";
  for (const NamedDistribution& d : in.distributions) {
    out << csv_field(d.name) << "," << d.summary.count << ","
        << fmt(d.summary.mean) << "," << fmt(d.summary.ci95_half_width) << ","
        << fmt(d.summary.fraction_below) << "," << fmt(d.summary.fraction_above)
        << "\n";
  }
  return out.str();
}

std::string correlations_csv(const ReportInputs& in) {
  std::ostringstream out;
  out << "model,pair,kendall_tau,ci_lo,ci_hi,ci_level\n";
  for (const CorrelationRow& row : in.correlations) {
    out << csv_field(in.model_name) << "," << csv_field(row.pair) << ","
        << fmt(row.tau) << "," << fmt(row.ci_lo) << "," << fmt(row.ci_hi)
        << "," << fmt(row.ci_level, 2) << "\n";
  }
  return out.str();
}

std::string significance_csv(const ReportInputs& in) {
  std::ostringstream out;
  out << "baseline,candidate,baseline_mean,candidate_mean,t,p,significant\n";
  for (const SignificanceRow& row : in.significance) {
    out << csv_field(row.baseline) << "," << csv_field(row.candidate) << ","
        << fmt(row.baseline_mean) << "," << fmt(row.candidate_mean) << ","
        << fmt(row.t) << "," << fmt(row.p, 6) << ","
        << (row.significant ? "yes" : "no") << "\n";
  }
  return out.str();
}

void simulation_table(std::ostringstream& html, const ReportInputs& in) {
  std::set<std::size_t> ks;
  std::map<std::string, std::map<std::size_t, const simeval::SimResult*>> rows;
  std::vector<std::string> system_order;
  for (const simeval::SimResult& r : in.simulation) {
    ks.insert(r.k);
    if (rows.find(r.system) == rows.end()) system_order.push_back(r.system);
    rows[r.system][r.k] = &r;
  }
  html << "<table><tr><th>system</th>";
  for (std::size_t k : ks) html << "<th>k=" << k << "</th>";
  html << "<th>Avg</th></tr>\n";
  for (const std::string& system : system_order) {
    html << "<tr><td>" << escape_html(system) << "</td>";
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t k : ks) {
      auto it = rows[system].find(k);
      if (it == rows[system].end()) {
        html << "<td>-</td>";
        continue;
      }
      html << "<td>" << fmt(100.0 * it->second->mean_f1, 1) << "&#177;"
           << fmt(100.0 * it->second->ci95_half_width, 1) << "</td>";
      sum += it->second->mean_f1;
      ++n;
    }
    html << "<td>" << (n > 0 ? fmt(100.0 * sum / static_cast<double>(n), 1)
                             : std::string("-"))
         << "</td></tr>\n";
  }
  html << "</table>\n";
}

}  // namespace

void write_report(const std::filesystem::path& dir, const ReportInputs& in) {
  std::filesystem::create_directories(dir);
  atomic_write_file(dir / "distribution_summary.csv", distribution_csv(in));
  atomic_write_file(dir / "variant_correlations.csv", correlations_csv(in));
  atomic_write_file(dir / "significance.csv", significance_csv(in));

  std::ostringstream sim_csv;
  sim_csv << simeval::results_to_csv(in.simulation, in.model_name);
  atomic_write_file(dir / "simulation_results.csv", sim_csv.str());

  std::ostringstream html;
  html << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\">\n"
       << "<title>Consistency report</title>\n"
       << "<style>body{font-family:sans-serif;margin:2em;}"
       << "table{border-collapse:collapse;margin:1em 0;}"
       << "td,th{border:1px solid #999;padding:4px 10px;text-align:right;}"
       << "th{background:#eee;}td:first-child,th:first-child{text-align:left;}"
       << "</style></head><body>\n"
       << "<h1>Explanation consistency report</h1>\n"
       << "<p>Scores are weight-of-evidence log-odds in nats; scores above 2 "
          "count as consistent and scores below 0 as inconsistent.</p>\n";

  html << "<h2>Score distributions</h2>\n<table><tr><th>model</th>"
          "<th>count</th><th>mean</th><th>95% CI</th><th>&lt; 0</th>"
          "<th>&gt; 2</th></tr>\n";
  for (const NamedDistribution& d : in.distributions) {
    html << "<tr><td>" << escape_html(d.name) << "</td><td>" << d.summary.count
         << "</td><td>" << fmt(d.summary.mean) << "</td><td>&#177;"
         << fmt(d.summary.ci95_half_width) << "</td><td>"
         << fmt(100.0 * d.summary.fraction_below, 1) << "%</td><td>"
         << fmt(100.0 * d.summary.fraction_above, 1) << "%</td></tr>\n";
  }
  html << "</table>\n";

  html << "<h2>Prompt-format sensitivity (Kendall tau)</h2>\n"
          "<table><tr><th>pair</th><th>tau</th><th>CI</th></tr>\n";
  for (const CorrelationRow& row : in.correlations) {
    html << "<tr><td>" << escape_html(row.pair) << "</td><td>" << fmt(row.tau)
         << "</td><td>(" << fmt(row.ci_lo, 2) << "&#8211;" << fmt(row.ci_hi, 2)
         << ")</td></tr>\n";
  }
  html << "</table>\n";

  html << "<h2>Simulation performance (F1 &#215; 100)</h2>\n";
  simulation_table(html, in);

  html << "<h2>Consistency significance</h2>\n"
          "<table><tr><th>comparison</th><th>means</th><th>t</th><th>p</th>"
          "<th>p &lt; 0.05</th></tr>\n";
  for (const SignificanceRow& row : in.significance) {
    html << "<tr><td>" << escape_html(row.candidate) << " vs "
         << escape_html(row.baseline) << "</td><td>"
         << fmt(row.candidate_mean) << " vs " << fmt(row.baseline_mean)
         << "</td><td>" << fmt(row.t) << "</td><td>" << fmt(row.p, 6)
         << "</td><td>" << (row.significant ? "yes" : "no") << "</td></tr>\n";
  }
  html << "</table>\n";

  if (!in.reference.is_null() && !in.reference.empty()) {
    html << "<h2>Published reference results</h2>\n"
         << "<p>Reference-only metadata from the source experiments; not "
            "reproduced by this toolkit.</p>\n<pre>"
         << escape_html(in.reference.dump(2)) << "</pre>\n";
  }

  html << "</body></html>\n";
  atomic_write_file(dir / "index.html", html.str());
}

}  // namespace pex::report
