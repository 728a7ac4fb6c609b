// Copyright 2026 The Privleak Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "privleak/error.hpp"

namespace privleak {

// Ascending ranks starting at 1; tied values share the mean of the ranks
// they cover. Infinities are ordinary (extreme) values.
inline std::vector<double> average_rank(std::span<const double> values) {
  if (values.empty()) fail(ErrorCode::kInsufficientData, "cannot rank an empty vector");
  for (double v : values) {
    if (std::isnan(v)) fail(ErrorCode::kInvalidValue, "NaN in ranked values");
  }
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });
  std::vector<double> ranks(values.size());
  std::size_t start = 0;
  while (start < order.size()) {
    std::size_t end = start + 1;
    while (end < order.size() && values[order[end]] == values[order[start]]) ++end;
    // Positions start..end-1 hold ranks start+1..end.
    const double mean_rank = 0.5 * static_cast<double>(start + 1 + end);
    for (std::size_t k = start; k < end; ++k) ranks[order[k]] = mean_rank;
    start = end;
  }
  return ranks;
}

namespace detail {

inline void check_pair(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(ErrorCode::kDimension, "correlated vectors differ in length");
  if (a.size() < 3) fail(ErrorCode::kInsufficientData, "correlation needs at least 3 samples");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::isnan(a[i]) || std::isnan(b[i])) fail(ErrorCode::kInvalidValue, "NaN in correlated values");
  }
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) {
    fail(ErrorCode::kUndefinedCorrelation, "constant input vector");
  }
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

// Number of pairs inside runs of equal keys, sum of t(t-1)/2.
template <typename Equal>
std::int64_t tied_pairs(std::size_t n, Equal equal) {
  std::int64_t total = 0;
  std::size_t start = 0;
  while (start < n) {
    std::size_t end = start + 1;
    while (end < n && equal(start, end)) ++end;
    const auto t = static_cast<std::int64_t>(end - start);
    total += t * (t - 1) / 2;
    start = end;
  }
  return total;
}

// Stable merge sort counting inversions (strictly greater-before-less).
inline std::int64_t merge_count(std::vector<double>& v, std::vector<double>& buf,
                                std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::int64_t swaps = merge_count(v, buf, lo, mid) + merge_count(v, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      swaps += static_cast<std::int64_t>(mid - i);
      buf[k++] = v[j++];
    } else {
      buf[k++] = v[i++];
    }
  }
  while (i < mid) buf[k++] = v[i++];
  while (j < hi) buf[k++] = v[j++];
  std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return swaps;
}

}  // namespace detail

// Pearson correlation of average ranks, so ties are handled.
inline double spearman_rho(std::span<const double> a, std::span<const double> b) {
  detail::check_pair(a, b);
  const auto ra = average_rank(a);
  const auto rb = average_rank(b);
  return detail::pearson(ra, rb);
}

// Kendall tau-b, O(n log n) (Knight's algorithm).
inline double kendall_tau(std::span<const double> a, std::span<const double> b) {
  detail::check_pair(a, b);
  const std::size_t n = a.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    if (a[i] != a[j]) return a[i] < a[j];
    return b[i] < b[j];
  });
  std::vector<double> sa(n), sb(n);
  for (std::size_t k = 0; k < n; ++k) {
    sa[k] = a[order[k]];
    sb[k] = b[order[k]];
  }
  const std::int64_t ties_a = detail::tied_pairs(n, [&](std::size_t i, std::size_t j) { return sa[i] == sa[j]; });
  const std::int64_t ties_joint = detail::tied_pairs(
      n, [&](std::size_t i, std::size_t j) { return sa[i] == sa[j] && sb[i] == sb[j]; });
  std::vector<double> buf(n);
  const std::int64_t swaps = detail::merge_count(sb, buf, 0, n);
  // sb is now sorted.
  const std::int64_t ties_b = detail::tied_pairs(n, [&](std::size_t i, std::size_t j) { return sb[i] == sb[j]; });
  const auto pairs = static_cast<std::int64_t>(n * (n - 1) / 2);
  if (ties_a == pairs || ties_b == pairs) {
    fail(ErrorCode::kUndefinedCorrelation, "constant input vector");
  }
  const std::int64_t score = pairs - ties_a - ties_b + ties_joint - 2 * swaps;
  const double denom = std::sqrt(static_cast<double>(pairs - ties_a) * static_cast<double>(pairs - ties_b));
  return std::clamp(static_cast<double>(score) / denom, -1.0, 1.0);
}

struct CorrelationResult {
  double rho = 0.0;
  double tau = 0.0;
  std::size_t n = 0;
};

inline CorrelationResult correlate(std::span<const double> a, std::span<const double> b) {
  return CorrelationResult{spearman_rho(a, b), kendall_tau(a, b), a.size()};
}

}  // namespace privleak
