#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "ntkd/errors.hpp"

namespace ntkd {

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / double(v.size());
}

inline double stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / double(v.size()));
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct MomentStats {
  double mean = 0.0;
  double stddev = 0.0;
  double skewness = 0.0;
  double excess_kurtosis = 0.0;
  bool defined = false;  // false when the sample variance vanishes
};

inline MomentStats moment_stats(const std::vector<double>& v) {
  MomentStats s;
  if (v.size() < 2) return s;
  s.mean = mean(v);
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double x : v) {
    const double d = x - s.mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  const double n = double(v.size());
  m2 /= n;
  m3 /= n;
  m4 /= n;
  if (m2 <= 0.0) return s;  // constant sample
  s.stddev = std::sqrt(m2);
  s.skewness = m3 / (m2 * s.stddev);
  s.excess_kurtosis = m4 / (m2 * m2) - 3.0;
  s.defined = true;
  return s;
}

inline double normal_cdf(double z) {
  return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

// Kolmogorov-Smirnov distance between the sample and a normal fitted to its
// own mean and standard deviation.
inline double ks_statistic_vs_fitted_normal(std::vector<double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  const double s = stddev(v);
  if (s == 0.0) return 1.0;
  std::sort(v.begin(), v.end());
  const double n = double(v.size());
  double d = 0.0;
  for (size_t i = 0; i < v.size(); ++i) {
    const double c = normal_cdf((v[i] - m) / s);
    d = std::max(d, std::abs(double(i + 1) / n - c));
    d = std::max(d, std::abs(double(i) / n - c));
  }
  return d;
}

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double pearson_r = 0.0;
  bool defined = false;  // needs >= 2 distinct x values
};

inline LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  LinearFit f;
  if (x.size() != y.size() || x.size() < 2) return f;
  const double mx = mean(x), my = mean(y);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) return f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.pearson_r = syy > 0.0 ? sxy / std::sqrt(sxx * syy) : 0.0;
  f.defined = true;
  return f;
}

}  // namespace ntkd
