#include "pex/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "pex/errors.hpp"
#include "pex/rng.hpp"

namespace pex::stats {

namespace detail {

double mean(std::span<const double> v) {
  double s = 0.0;
  for (double d : v) s += d;
  return s / static_cast<double>(v.size());
}

double sample_variance(std::span<const double> v) {
  const double m = mean(v);
  double s = 0.0;
  for (double d : v) s += (d - m) * (d - m);
  return s / static_cast<double>(v.size() - 1);
}

namespace {

// Continued fraction for the incomplete beta function (modified Lentz).
double betacf(double a, double b, double x) {
  constexpr int max_iter = 300;
  constexpr double eps = 1e-14;
  constexpr double fpmin = 1e-300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < fpmin) d = fpmin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= max_iter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < fpmin) d = fpmin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < fpmin) d = fpmin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < eps) return h;
  }
  throw DomainError("ibeta: continued fraction did not converge");
}

}  // namespace

double ibeta(double a, double b, double x) {
  if (x < 0.0 || x > 1.0) throw DomainError("ibeta: x outside [0,1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) -
                          std::lgamma(b) + a * std::log(x) +
                          b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * betacf(a, b, x) / a;
  }
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double igamma_lower(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw DomainError("igamma: bad arguments");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) {
    // Series representation.
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int n = 0; n < 500; ++n) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::fabs(del) < std::fabs(sum) * 1e-15) {
        return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
      }
    }
    throw DomainError("igamma: series did not converge");
  }
  // Continued fraction for Q(a, x), then P = 1 - Q.
  constexpr double fpmin = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / fpmin;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < fpmin) d = fpmin;
    c = b + an / c;
    if (std::fabs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-15) {
      const double q = std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
      return 1.0 - q;
    }
  }
  throw DomainError("igamma: continued fraction did not converge");
}

double student_t_two_sided_p(double t, double df) {
  const double x = df / (df + t * t);
  return ibeta(df / 2.0, 0.5, x);
}

double student_t_cdf(double t, double df) {
  const double p = student_t_two_sided_p(t, df);
  return t >= 0.0 ? 1.0 - p / 2.0 : p / 2.0;
}

double student_t_quantile(double p, double df) {
  if (p <= 0.0 || p >= 1.0) throw DomainError("t quantile: p outside (0,1)");
  double lo = -1e6, hi = 1e6;
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (student_t_cdf(mid, df) < p) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

double chi_square_sf(double x, double k) {
  return 1.0 - igamma_lower(k / 2.0, x / 2.0);
}

}  // namespace detail

namespace {

void check_paired(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DomainError("paired sample: length mismatch");
  if (x.size() < 2) throw DomainError("paired sample: need at least 2 items");
  for (double v : x) {
    if (!std::isfinite(v)) throw DomainError("paired sample: non-finite entry");
  }
  for (double v : y) {
    if (!std::isfinite(v)) throw DomainError("paired sample: non-finite entry");
  }
}

// Counts exchanges performed by merge sort: Knight's method for the
// discordant-pair contribution.
std::uint64_t merge_count(std::vector<double>& v, std::vector<double>& buf,
                          std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::uint64_t swaps = merge_count(v, buf, lo, mid);
  swaps += merge_count(v, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      swaps += mid - i;
      buf[k++] = v[j++];
    } else {
      buf[k++] = v[i++];
    }
  }
  while (i < mid) buf[k++] = v[i++];
  while (j < hi) buf[k++] = v[j++];
  std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo),
            buf.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return swaps;
}

std::uint64_t tie_pairs(const std::vector<double>& sorted) {
  std::uint64_t total = 0;
  std::size_t run = 1;
  for (std::size_t i = 1; i <= sorted.size(); ++i) {
    if (i < sorted.size() && sorted[i] == sorted[i - 1]) {
      ++run;
    } else {
      total += static_cast<std::uint64_t>(run) * (run - 1) / 2;
      run = 1;
    }
  }
  return total;
}

}  // namespace

double kendall_tau(std::span<const double> x, std::span<const double> y) {
  check_paired(x, y);
  const std::size_t n = x.size();

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (x[a] != x[b]) return x[a] < x[b];
    return y[a] < y[b];
  });

  // Tie counts in x, in y, and jointly.
  std::uint64_t n1 = 0, n3 = 0;
  {
    std::size_t run_x = 1, run_xy = 1;
    for (std::size_t i = 1; i <= n; ++i) {
      const bool same_x = i < n && x[order[i]] == x[order[i - 1]];
      const bool same_xy = same_x && y[order[i]] == y[order[i - 1]];
      if (same_x) {
        ++run_x;
      } else {
        n1 += static_cast<std::uint64_t>(run_x) * (run_x - 1) / 2;
        run_x = 1;
      }
      if (same_xy) {
        ++run_xy;
      } else {
        n3 += static_cast<std::uint64_t>(run_xy) * (run_xy - 1) / 2;
        run_xy = 1;
      }
    }
  }

  std::vector<double> ys(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = y[order[i]];
  std::vector<double> buf(n);
  const std::uint64_t swaps = merge_count(ys, buf, 0, n);  // ys now sorted
  const std::uint64_t n2 = tie_pairs(ys);

  const std::uint64_t n0 = static_cast<std::uint64_t>(n) * (n - 1) / 2;
  if (n1 == n0) throw DomainError("kendall_tau: x is constant (all ties)");
  if (n2 == n0) throw DomainError("kendall_tau: y is constant (all ties)");

  // C - D = n0 - n1 - n2 + n3 - 2*swaps, all exact integers.
  const double num = static_cast<double>(
      static_cast<std::int64_t>(n0 - n1 - n2 + n3) -
      static_cast<std::int64_t>(2 * swaps));
  const double denom = std::sqrt(static_cast<double>(n0 - n1) *
                                 static_cast<double>(n0 - n2));
  return num / denom;
}

Interval bootstrap_ci(std::span<const double> x, std::span<const double> y,
                      const PairedStatistic& statistic, double level,
                      int resamples, std::uint64_t seed) {
  check_paired(x, y);
  if (level <= 0.0 || level >= 1.0) {
    throw DomainError("bootstrap_ci: level outside (0,1)");
  }
  if (resamples < 1000) {
    throw DomainError("bootstrap_ci: need at least 1000 resamples");
  }
  const std::size_t n = x.size();
  std::vector<double> stats_out(static_cast<std::size_t>(resamples));
  std::vector<double> rx(n), ry(n);
  for (int r = 0; r < resamples; ++r) {
    Rng rng = make_rng(stable_hash(seed, "bootstrap", r));
    double value = std::numeric_limits<double>::quiet_NaN();
    bool ok = false;
    for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t idx = static_cast<std::size_t>(bounded(rng, n));
        rx[i] = x[idx];
        ry[i] = y[idx];
      }
      try {
        value = statistic(rx, ry);
        ok = std::isfinite(value);
      } catch (const DomainError&) {
        ok = false;  // degenerate resample, redraw
      }
    }
    if (!ok) {
      throw DomainError("bootstrap_ci: statistic undefined after 100 redraws");
    }
    stats_out[static_cast<std::size_t>(r)] = value;
  }
  std::sort(stats_out.begin(), stats_out.end());
  const auto quantile = [&](double q) {
    const double h = q * static_cast<double>(stats_out.size() - 1);
    const std::size_t i = static_cast<std::size_t>(h);
    if (i + 1 >= stats_out.size()) return stats_out.back();
    const double frac = h - static_cast<double>(i);
    return stats_out[i] + frac * (stats_out[i + 1] - stats_out[i]);
  };
  const double alpha = 1.0 - level;
  return Interval{quantile(alpha / 2.0), quantile(1.0 - alpha / 2.0)};
}

TTestResult paired_t_test(std::span<const double> x,
                          std::span<const double> y) {
  check_paired(x, y);
  const std::size_t n = x.size();
  std::vector<double> diff(n);
  for (std::size_t i = 0; i < n; ++i) diff[i] = x[i] - y[i];
  const double m = detail::mean(diff);
  const double var = detail::sample_variance(diff);
  if (var <= 0.0) {
    throw DomainError("paired_t_test: zero variance of differences");
  }
  TTestResult res;
  res.df = static_cast<int>(n) - 1;
  res.t = m / std::sqrt(var / static_cast<double>(n));
  res.p = detail::student_t_two_sided_p(res.t, static_cast<double>(res.df));
  return res;
}

DistributionSummary distribution_summary(std::span<const double> scores,
                                         double lower, double upper,
                                         std::size_t bins) {
  if (scores.empty()) throw DomainError("distribution_summary: empty input");
  for (double v : scores) {
    if (!std::isfinite(v)) {
      throw DomainError("distribution_summary: non-finite score");
    }
  }
  DistributionSummary out;
  out.count = scores.size();
  out.mean = detail::mean(scores);
  out.lower_threshold = lower;
  out.upper_threshold = upper;
  if (scores.size() >= 2) {
    const double sd = std::sqrt(detail::sample_variance(scores));
    out.ci95_half_width = 1.96 * sd / std::sqrt(static_cast<double>(out.count));
  }
  std::size_t below = 0, above = 0;
  double mn = scores[0], mx = scores[0];
  for (double v : scores) {
    if (v < lower) ++below;
    if (v > upper) ++above;
    mn = std::min(mn, v);
    mx = std::max(mx, v);
  }
  out.fraction_below = static_cast<double>(below) / static_cast<double>(out.count);
  out.fraction_above = static_cast<double>(above) / static_cast<double>(out.count);

  if (bins == 0) bins = 1;
  if (mx == mn) mx = mn + 1.0;  // degenerate: single-point data
  const double width = (mx - mn) / static_cast<double>(bins);
  out.bin_edges.resize(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b) {
    out.bin_edges[b] = mn + width * static_cast<double>(b);
  }
  out.bin_counts.assign(bins, 0);
  for (double v : scores) {
    std::size_t b = static_cast<std::size_t>((v - mn) / width);
    if (b >= bins) b = bins - 1;  // right edge inclusive
    ++out.bin_counts[b];
  }
  return out;
}

}  // namespace pex::stats
