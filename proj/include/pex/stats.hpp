#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace pex::stats {

// Two equal-length vectors aligned by item id.
struct PairedSample {
  std::vector<double> x;
  std::vector<double> y;
};

struct TTestResult {
  double t = 0.0;
  double p = 0.0;  // two-sided
  int df = 0;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct DistributionSummary {
  std::size_t count = 0;
  double mean = 0.0;
  double ci95_half_width = 0.0;  // normal approximation
  double fraction_below = 0.0;   // score < lower threshold
  double fraction_above = 0.0;   // score > upper threshold
  double lower_threshold = 0.0;
  double upper_threshold = 2.0;
  std::vector<double> bin_edges;       // size bins + 1
  std::vector<std::size_t> bin_counts; // size bins
};

// Kendall tau-b (tie corrected), O(n log n) merge-sort counting.
// Throws DomainError on length mismatch, n < 2, or an all-tied vector
// (tau undefined).
double kendall_tau(std::span<const double> x, std::span<const double> y);

// Statistic evaluated on a paired resample.
using PairedStatistic = std::function<double(
    std::span<const double>, std::span<const double>)>;

// Percentile bootstrap over paired resampling. Resample r draws its
// generator from stable_hash(seed, r), so results are independent of
// evaluation order. A resample on which the statistic is undefined
// (non-finite or throwing) is redrawn, up to 100 retries.
Interval bootstrap_ci(std::span<const double> x, std::span<const double> y,
                      const PairedStatistic& statistic, double level,
                      int resamples, std::uint64_t seed);

// Classical paired (two-related-sample) t-test, df = n - 1, two-sided p.
// Throws DomainError when the difference variance is zero.
TTestResult paired_t_test(std::span<const double> x,
                          std::span<const double> y);

// Count/mean/CI plus the fraction of scores below `lower` and above `upper`
// (strict inequalities on both sides) and a fixed-width histogram.
DistributionSummary distribution_summary(std::span<const double> scores,
                                         double lower = 0.0,
                                         double upper = 2.0,
                                         std::size_t bins = 20);

namespace detail {

// Regularized incomplete beta I_x(a, b) via Lentz continued fraction,
// accurate to ~1e-12 over the t-test parameter range.
double ibeta(double a, double b, double x);

// Regularized lower incomplete gamma P(a, x).
double igamma_lower(double a, double x);

double student_t_cdf(double t, double df);
double student_t_two_sided_p(double t, double df);
double student_t_quantile(double p, double df);  // bisection on the CDF

// Survival function of the chi-square distribution with k df.
double chi_square_sf(double x, double k);

double mean(std::span<const double> v);
double sample_variance(std::span<const double> v);

}  // namespace detail

}  // namespace pex::stats
