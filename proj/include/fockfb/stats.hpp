#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace fockfb {

/// Linear-interpolated quantile of already sorted data (q in [0, 1]).
inline double sorted_quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("sorted_quantile: empty data");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

struct SampleStats {
  double mean = 0.0;
  double median = 0.0;
  double p25 = 0.0;
  double p75 = 0.0;
  double stddev = 0.0;
  std::size_t n = 0;
};

inline SampleStats sample_stats(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("sample_stats: empty data");
  SampleStats s;
  s.n = values.size();
  // Summation in input order keeps the result independent of sorting ties.
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(s.n);
  double var = 0.0;
  for (double v : values) var += (v - s.mean) * (v - s.mean);
  s.stddev = s.n > 1 ? std::sqrt(var / static_cast<double>(s.n - 1)) : 0.0;
  std::sort(values.begin(), values.end());
  s.median = sorted_quantile(values, 0.5);
  s.p25 = sorted_quantile(values, 0.25);
  s.p75 = sorted_quantile(values, 0.75);
  return s;
}

}  // namespace fockfb
