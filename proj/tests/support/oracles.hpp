#pragma once

// Brute-force reference implementations written independently of the
// library code they check.

#include <cmath>
#include <vector>

namespace mtq::testing {

inline double brute_mean(const std::vector<double>& x) {
  long double s = 0;
  for (double v : x) s += v;
  return static_cast<double>(s / x.size());
}

// cov / (sigma sigma) straight from the definition.
inline double brute_pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double ma = brute_mean(a), mb = brute_mean(b);
  long double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (static_cast<long double>(a[i]) - ma) * (b[i] - mb);
    va += (static_cast<long double>(a[i]) - ma) * (a[i] - ma);
    vb += (static_cast<long double>(b[i]) - mb) * (b[i] - mb);
  }
  return static_cast<double>(cov / std::sqrt(va * vb));
}

// O(n^2) average ranks: rank = 1 + #less + (#equal - 1) / 2.
inline std::vector<double> brute_ranks(const std::vector<double>& x) {
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double less = 0, equal = 0;
    for (double v : x) {
      if (v < x[i]) less += 1;
      if (v == x[i]) equal += 1;
    }
    r[i] = 1.0 + less + (equal - 1.0) / 2.0;
  }
  return r;
}

inline double brute_spearman(const std::vector<double>& a, const std::vector<double>& b) {
  return brute_pearson(brute_ranks(a), brute_ranks(b));
}

inline double brute_mse(const std::vector<double>& a, const std::vector<double>& b) {
  long double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (static_cast<long double>(a[i]) - b[i]) * (a[i] - b[i]);
  return static_cast<double>(s / a.size());
}

// Hand-written Huber, independent of the library.
inline double ref_huber(double e, double d) {
  const double a = std::fabs(e);
  return a <= d ? 0.5 * e * e : d * (a - 0.5 * d);
}

}  // namespace mtq::testing
