#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

namespace sde {

// Fixed-shape pairwise summation: the result depends only on the array
// contents, never on worker scheduling, and error grows like log n.
inline double pairwise_sum(const double* a, std::size_t n) {
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i];
    return s;
  }
  std::size_t half = n / 2;
  return pairwise_sum(a, half) + pairwise_sum(a + half, n - half);
}

inline double pairwise_sum(const std::vector<double>& v) {
  return pairwise_sum(v.data(), v.size());
}

struct MeanStderr {
  double mean = 0.0;
  double stderr_ = 0.0;  // std error of the mean, 0 when n < 2
};

// Two-pass mean/stderr on a deterministic-order sample.
inline MeanStderr mean_stderr(const std::vector<double>& v) {
  MeanStderr r;
  const std::size_t n = v.size();
  if (n == 0) return r;
  r.mean = pairwise_sum(v) / static_cast<double>(n);
  if (n < 2) return r;
  std::vector<double> sq(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = v[i] - r.mean;
    sq[i] = d * d;
  }
  const double var = pairwise_sum(sq) / static_cast<double>(n - 1);
  r.stderr_ = std::sqrt(var / static_cast<double>(n));
  return r;
}

}  // namespace sde
