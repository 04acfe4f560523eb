#pragma once

#include <span>

namespace rumpl::stats {

double mean(std::span<const double> x);
/// Sample standard deviation (n - 1 denominator).
double stddev(std::span<const double> x);
double median(std::span<const double> x);
double pearson(std::span<const double> x, std::span<const double> y);

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  /// P(T <= t) under the null, i.e. the one-sided p-value for mean(a) < mean(b).
  double p_less = 1.0;
};

/// Two-sample t-test without the equal-variance assumption. Needs at least
/// two values per side.
WelchResult welch_t_test(std::span<const double> a, std::span<const double> b);

}  // namespace rumpl::stats
