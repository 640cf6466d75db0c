#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "caa/error.hpp"

namespace caa::stats {

inline double mean(std::span<const double> xs) {
  if (xs.empty()) throw DataError("mean of an empty sample");
  double s = 0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

/// Unbiased (n - 1) variance.
inline double sample_variance(std::span<const double> xs) {
  if (xs.size() < 2) throw DataError("sample variance needs at least two values");
  double m = mean(xs);
  double ss = 0;
  for (double x : xs) ss += (x - m) * (x - m);
  return ss / static_cast<double>(xs.size() - 1);
}

struct TTestResult {
  std::size_t n = 0;
  double mean = 0;  // mean difference
  double sd = 0;    // sample SD of the differences
  double t = 0;
  double df = 0;
  double p = 1;  // two-sided
  double ci_low = 0;
  double ci_high = 0;
  /// The differences have zero variance. t is 0 (p = 1) when they are all
  /// zero and +/-inf (p = 0) otherwise; the CI collapses to the mean.
  bool zero_variance = false;
};

/// One-sample two-sided t-test of `diffs` against zero, with a t-based
/// confidence interval for the mean.
inline TTestResult one_sample_ttest(std::span<const double> diffs, double confidence = 0.95) {
  if (diffs.size() < 2) throw DataError("a t-test needs at least two observations");
  TTestResult r;
  r.n = diffs.size();
  r.df = static_cast<double>(r.n - 1);
  r.mean = mean(diffs);
  r.sd = std::sqrt(sample_variance(diffs));

  if (r.sd == 0.0) {
    r.zero_variance = true;
    r.ci_low = r.ci_high = r.mean;
    if (r.mean == 0.0) {
      r.t = 0.0;
      r.p = 1.0;
    } else {
      r.t = std::copysign(std::numeric_limits<double>::infinity(), r.mean);
      r.p = 0.0;
    }
    return r;
  }

  const double se = r.sd / std::sqrt(static_cast<double>(r.n));
  r.t = r.mean / se;
  boost::math::students_t_distribution<double> dist(r.df);
  r.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.t)));
  const double q = boost::math::quantile(boost::math::complement(dist, (1.0 - confidence) / 2.0));
  r.ci_low = r.mean - q * se;
  r.ci_high = r.mean + q * se;
  return r;
}

/// Paired two-sided t-test over a[i] - b[i].
inline TTestResult paired_ttest(std::span<const double> a, std::span<const double> b,
                                double confidence = 0.95) {
  if (a.size() != b.size()) throw DataError("paired t-test needs samples of equal length");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return one_sample_ttest(d, confidence);
}

}  // namespace caa::stats
