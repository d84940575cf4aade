#include <doctest.h>

#include <cmath>
#include <vector>

#include "pex/errors.hpp"
#include "pex/rng.hpp"
#include "pex/stats.hpp"
#include "support/oracles.hpp"

using namespace pex;
using namespace pex::stats;

namespace {

std::vector<double> random_vector(Rng& rng, std::size_t n, bool with_ties) {
  std::vector<double> v(n);
  for (double& x : v) {
    // Coarse grid when ties are wanted.
    x = with_ties ? static_cast<double>(bounded(rng, 8))
                  : uniform01(rng);
  }
  return v;
}

}  // namespace

TEST_CASE("kendall tau on identical and reversed rankings") {
  const std::vector<double> x = {1, 2, 3, 4, 5, 6};
  CHECK(kendall_tau(x, x) == 1.0);
  const std::vector<double> rev = {6, 5, 4, 3, 2, 1};
  CHECK(kendall_tau(x, rev) == -1.0);
}

TEST_CASE("kendall tau equals the pair-counting oracle exactly") {
  Rng rng = make_rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + bounded(rng, 49);
    const bool ties = trial % 2 == 0;
    std::vector<double> x = random_vector(rng, n, ties);
    std::vector<double> y = random_vector(rng, n, ties);
    // Skip degenerate all-tied draws; they are covered by the error test.
    bool x_const = true, y_const = true;
    for (double v : x) x_const = x_const && v == x[0];
    for (double v : y) y_const = y_const && v == y[0];
    if (x_const || y_const) continue;
    CHECK(kendall_tau(x, y) == testing::kendall_oracle(x, y));
  }
}

TEST_CASE("kendall tau symmetry and sign flip") {
  Rng rng = make_rng(7);
  const std::vector<double> x = random_vector(rng, 30, false);
  const std::vector<double> y = random_vector(rng, 30, false);
  CHECK(kendall_tau(x, y) == kendall_tau(y, x));
  std::vector<double> neg_y = y;
  for (double& v : neg_y) v = -v;
  CHECK(kendall_tau(x, neg_y) == -kendall_tau(x, y));
}

TEST_CASE("kendall tau rejects degenerate input") {
  const std::vector<double> constant = {1.0, 1.0, 1.0};
  const std::vector<double> varying = {1.0, 2.0, 3.0};
  CHECK_THROWS_AS(kendall_tau(constant, varying), DomainError);
  CHECK_THROWS_AS(kendall_tau(varying, constant), DomainError);
  CHECK_THROWS_AS(kendall_tau(varying, std::vector<double>{1.0, 2.0}),
                  DomainError);
  CHECK_THROWS_AS(kendall_tau(std::vector<double>{1.0},
                              std::vector<double>{1.0}),
                  DomainError);
}

TEST_CASE("paired t-test matches the quadrature oracle to 1e-6") {
  Rng rng = make_rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 5 + bounded(rng, 26);  // up to 30 pairs
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = uniform01(rng) * 4.0;
      y[i] = x[i] + (uniform01(rng) - 0.45);
    }
    const TTestResult res = paired_t_test(x, y);
    const double oracle = testing::t_pvalue_quadrature(res.t, res.df);
    CHECK(std::fabs(res.p - oracle) < 1e-6);
    CHECK(res.p >= 0.0);
    CHECK(res.p <= 1.0);
  }
}

TEST_CASE("paired t-test is translation invariant") {
  const std::vector<double> x = {1.0, 2.5, 3.1, 0.2, 4.4, 2.2};
  const std::vector<double> y = {0.4, 2.0, 3.3, 0.6, 3.9, 1.0};
  std::vector<double> xs = x, ys = y;
  for (double& v : xs) v += 7.25;
  for (double& v : ys) v += 7.25;
  const TTestResult a = paired_t_test(x, y);
  const TTestResult b = paired_t_test(xs, ys);
  CHECK(a.t == doctest::Approx(b.t).epsilon(1e-12));
  CHECK(a.p == doctest::Approx(b.p).epsilon(1e-12));
}

TEST_CASE("paired t-test rejects zero difference variance") {
  const std::vector<double> x = {1.0, 2.0, 3.0};
  CHECK_THROWS_AS(paired_t_test(x, x), DomainError);
  std::vector<double> shifted = x;
  for (double& v : shifted) v += 1.0;  // differences all equal +1
  CHECK_THROWS_AS(paired_t_test(shifted, x), DomainError);
}

TEST_CASE("bootstrap interval is reproducible and brackets the estimate") {
  Rng rng = make_rng(5);
  std::vector<double> x(200), y(200);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = uniform01(rng);
    y[i] = x[i] * 0.8 + 0.2 * uniform01(rng);
  }
  const auto mean_diff = [](std::span<const double> a,
                            std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] - b[i];
    return s / static_cast<double>(a.size());
  };
  const Interval first = bootstrap_ci(x, y, mean_diff, 0.90, 1000, 42);
  const Interval second = bootstrap_ci(x, y, mean_diff, 0.90, 1000, 42);
  CHECK(first.lo == second.lo);
  CHECK(first.hi == second.hi);

  const double point = mean_diff(x, y);
  CHECK(first.lo <= point);
  CHECK(point <= first.hi);
}

TEST_CASE("constant statistic yields a zero-width interval") {
  const std::vector<double> x = {1, 2, 3, 4, 5};
  const std::vector<double> y = {5, 4, 3, 2, 1};
  const auto constant = [](std::span<const double>, std::span<const double>) {
    return 3.5;
  };
  const Interval ci = bootstrap_ci(x, y, constant, 0.90, 1000, 1);
  CHECK(ci.lo == 3.5);
  CHECK(ci.hi == 3.5);
}

TEST_CASE("bootstrap intervals widen weakly with the level") {
  Rng rng = make_rng(17);
  std::vector<double> x(60), y(60);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = uniform01(rng);
    y[i] = uniform01(rng);
  }
  const auto mean_diff = [](std::span<const double> a,
                            std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] - b[i];
    return s / static_cast<double>(a.size());
  };
  const Interval narrow = bootstrap_ci(x, y, mean_diff, 0.80, 2000, 9);
  const Interval wide = bootstrap_ci(x, y, mean_diff, 0.95, 2000, 9);
  CHECK(wide.lo <= narrow.lo);
  CHECK(narrow.hi <= wide.hi);
}

TEST_CASE("bootstrap validates its preconditions") {
  const std::vector<double> x = {1, 2, 3};
  const auto stat = [](std::span<const double>, std::span<const double>) {
    return 0.0;
  };
  CHECK_THROWS_AS(bootstrap_ci(x, x, stat, 0.90, 999, 0), DomainError);
  CHECK_THROWS_AS(bootstrap_ci(x, x, stat, 1.5, 1000, 0), DomainError);
}

TEST_CASE("degenerate resamples are redrawn for tie-sensitive statistics") {
  // Tiny vector with many ties: some resamples are constant in x, where
  // kendall_tau is undefined; those must be redrawn, not fatal.
  const std::vector<double> x = {1.0, 1.0, 2.0, 2.0, 3.0};
  const std::vector<double> y = {0.5, 1.5, 1.0, 2.5, 2.0};
  const auto tau = [](std::span<const double> a, std::span<const double> b) {
    return kendall_tau(a, b);
  };
  const Interval ci = bootstrap_ci(x, y, tau, 0.90, 1000, 11);
  CHECK(ci.lo <= ci.hi);
}

TEST_CASE("distribution summary counts threshold fractions") {
  const std::vector<double> scores = {-1.0, 1.0, 3.0};
  const DistributionSummary s = distribution_summary(scores);
  CHECK(s.count == 3);
  CHECK(s.fraction_below == doctest::Approx(1.0 / 3.0));
  CHECK(s.fraction_above == doctest::Approx(1.0 / 3.0));

  const std::vector<double> zeros = {0.0, 0.0, 0.0};
  const DistributionSummary z = distribution_summary(zeros);
  CHECK(z.fraction_below == 0.0);
  CHECK(z.fraction_above == 0.0);
}

TEST_CASE("distribution summary fractions match a counting oracle") {
  Rng rng = make_rng(31);
  std::vector<double> scores(1000);
  for (double& v : scores) v = (uniform01(rng) - 0.5) * 8.0;
  const DistributionSummary s = distribution_summary(scores);
  std::size_t below = 0, above = 0, middle = 0;
  for (double v : scores) {
    if (v < 0.0) ++below;
    else if (v > 2.0) ++above;
    else ++middle;
  }
  CHECK(s.fraction_below == static_cast<double>(below) / 1000.0);
  CHECK(s.fraction_above == static_cast<double>(above) / 1000.0);
  // The three regions partition the sample.
  CHECK(s.fraction_below + s.fraction_above +
            static_cast<double>(middle) / 1000.0 ==
        doctest::Approx(1.0).epsilon(1e-12));
  std::size_t binned = 0;
  for (std::size_t c : s.bin_counts) binned += c;
  CHECK(binned == scores.size());
}

TEST_CASE("distribution summary rejects bad input") {
  CHECK_THROWS_AS(distribution_summary(std::vector<double>{}), DomainError);
  CHECK_THROWS_AS(
      distribution_summary(std::vector<double>{1.0, std::nan("")}),
      DomainError);
}

TEST_CASE("t distribution helpers are sane") {
  // CDF symmetric around zero, quantile inverts it.
  CHECK(stats::detail::student_t_cdf(0.0, 7.0) ==
        doctest::Approx(0.5).epsilon(1e-12));
  const double q = stats::detail::student_t_quantile(0.975, 4.0);
  CHECK(stats::detail::student_t_cdf(q, 4.0) ==
        doctest::Approx(0.975).epsilon(1e-9));
  // Known value: t_{0.975, 4} = 2.7764451...
  CHECK(q == doctest::Approx(2.7764451).epsilon(1e-6));
}
