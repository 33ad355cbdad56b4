#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <utility>
#include <vector>

namespace crrt::eval::reference {

/// Brute-force ranking: full sort of the pool by (-score, id).
template <class T>
std::vector<int> full_sort(std::span<const T> scores, std::span<const int> pool) {
  std::vector<std::pair<T, int>> keyed;
  for (int i : pool) keyed.emplace_back(-scores[i - 1], i);
  std::sort(keyed.begin(), keyed.end());
  std::vector<int> order;
  for (auto& [s, i] : keyed) order.push_back(i);
  return order;
}

/// (hit, dcg) contribution of one sample at cutoff k.
template <class T>
std::pair<double, double> sample_metrics(std::span<const T> scores, std::span<const int> pool, int true_item, std::size_t k) {
  const auto order = full_sort(scores, pool);
  const std::size_t n = std::min(k, order.size());
  for (std::size_t h = 0; h < n; ++h)
    if (order[h] == true_item) return {1.0, 1.0 / std::log2(double(h) + 2.0)};
  return {0.0, 0.0};
}

}  // namespace crrt::eval::reference
