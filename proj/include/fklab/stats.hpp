#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace fklab {

inline constexpr double kZ95 = 1.959963984540054;

// Welford accumulator with a deterministic merge (Chan et al.)
struct Moments {
  double n = 0.0, mean = 0.0, m2 = 0.0;

  void add(double x) {
    n += 1.0;
    const double d = x - mean;
    mean += d / n;
    m2 += d * (x - mean);
  }
  void merge(const Moments& o) {
    if (o.n == 0.0) return;
    if (n == 0.0) {
      *this = o;
      return;
    }
    const double tot = n + o.n, d = o.mean - mean;
    mean += d * o.n / tot;
    m2 += o.m2 + d * d * n * o.n / tot;
    n = tot;
  }
  double var() const { return n > 1.0 ? m2 / (n - 1.0) : 0.0; }
  double sd() const { return std::sqrt(var()); }
  double se() const { return n > 0.0 ? sd() / std::sqrt(n) : 0.0; }
  double ci95() const { return kZ95 * se(); }
};

// Hill estimate of the exponential tail rate of a sample: if
// P(A > a) ~ e^{-theta a} then E[e^A] < inf iff theta > 1.
inline double hill_tail_rate(std::vector<double> a, double top_frac = 0.01, std::size_t min_k = 50) {
  if (a.size() < 2 * min_k) return 0.0;
  std::size_t k = std::max(min_k, static_cast<std::size_t>(top_frac * a.size()));
  k = std::min(k, a.size() - 1);
  std::nth_element(a.begin(), a.begin() + k, a.end(), std::greater<double>());
  const double thresh = a[k];
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) s += a[i] - thresh;
  return s > 0.0 ? static_cast<double>(k) / s : 1e300;
}

inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  const std::size_t i = std::min(v.size() - 1, static_cast<std::size_t>(q * (v.size() - 1) + 0.5));
  std::nth_element(v.begin(), v.begin() + i, v.end());
  return v[i];
}

inline double sample_skewness(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  double m = 0.0;
  for (double x : v) m += x;
  m /= n;
  double m2 = 0.0, m3 = 0.0;
  for (double x : v) {
    const double d = x - m;
    m2 += d * d;
    m3 += d * d * d;
  }
  m2 /= n;
  m3 /= n;
  return m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
}

}  // namespace fklab
