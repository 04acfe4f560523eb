#include "rumpl/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "rumpl/errors.hpp"

namespace rumpl::stats {

double mean(std::span<const double> x) {
  if (x.empty()) throw InvalidInput("mean of an empty sample");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double stddev(std::span<const double> x) {
  if (x.size() < 2) throw InvalidInput("stddev needs at least two values");
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return std::sqrt(s / static_cast<double>(x.size() - 1));
}

double median(std::span<const double> x) {
  if (x.empty()) throw InvalidInput("median of an empty sample");
  std::vector<double> v(x.begin(), x.end());
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw InvalidInput("pearson needs two equal-length samples");
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

WelchResult welch_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw InvalidInput("welch_t_test needs two values per sample");
  const double va = std::pow(stddev(a), 2) / static_cast<double>(a.size());
  const double vb = std::pow(stddev(b), 2) / static_cast<double>(b.size());
  WelchResult r;
  const double diff = mean(a) - mean(b);
  if (va + vb == 0.0) {
    r.t = diff < 0 ? -INFINITY : (diff > 0 ? INFINITY : 0.0);
    r.df = static_cast<double>(a.size() + b.size() - 2);
    r.p_less = diff < 0 ? 0.0 : (diff > 0 ? 1.0 : 0.5);
    return r;
  }
  r.t = diff / std::sqrt(va + vb);
  r.df = (va + vb) * (va + vb) /
         (va * va / static_cast<double>(a.size() - 1) + vb * vb / static_cast<double>(b.size() - 1));
  r.p_less = boost::math::cdf(boost::math::students_t(r.df), r.t);
  return r;
}

}  // namespace rumpl::stats
