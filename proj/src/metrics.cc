/*
 * Copyright 2026 The expstab Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "expstab/metrics.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <tuple>

namespace expstab {
namespace {

// Pairs tied within runs of equal values in `values[order[...]]`.
template <typename Equal>
std::int64_t tied_pairs(std::span<const std::size_t> order, Equal equal) {
  std::int64_t total = 0;
  std::int64_t run = 1;
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (equal(order[i - 1], order[i])) {
      ++run;
    } else {
      total += run * (run - 1) / 2;
      run = 1;
    }
  }
  return total + run * (run - 1) / 2;
}

// Stable merge sort of `order` by b, returning the number of inversions.
std::int64_t sort_counting_swaps(std::vector<std::size_t>& order, std::span<const double> b) {
  std::vector<std::size_t> buffer(order.size());
  std::int64_t swaps = 0;
  for (std::size_t width = 1; width < order.size(); width *= 2) {
    for (std::size_t lo = 0; lo < order.size(); lo += 2 * width) {
      const std::size_t mid = std::min(lo + width, order.size());
      const std::size_t hi = std::min(lo + 2 * width, order.size());
      std::size_t i = lo, j = mid, out = lo;
      while (i < mid && j < hi) {
        if (b[order[j]] < b[order[i]]) {
          swaps += static_cast<std::int64_t>(mid - i);
          buffer[out++] = order[j++];
        } else {
          buffer[out++] = order[i++];
        }
      }
      while (i < mid) buffer[out++] = order[i++];
      while (j < hi) buffer[out++] = order[j++];
    }
    std::swap(order, buffer);
  }
  return swaps;
}

}  // namespace

double kendall_tau(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("kendall_tau: length mismatch");
  if (a.size() < 2) throw std::invalid_argument("kendall_tau: need at least 2 elements");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::isnan(a[i]) || std::isnan(b[i])) throw std::invalid_argument("kendall_tau: NaN score");
  }
  const auto n = static_cast<std::int64_t>(a.size());
  const std::int64_t pairs = n * (n - 1) / 2;

  // Knight's algorithm: sort by (a, b), count ties, then count the swaps a
  // stable sort by b needs.
  std::vector<std::size_t> order(a.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return a[x] != a[y] ? a[x] < a[y] : b[x] < b[y];
  });
  const std::int64_t ties_a = tied_pairs(order, [&](auto x, auto y) { return a[x] == a[y]; });
  const std::int64_t ties_both =
      tied_pairs(order, [&](auto x, auto y) { return a[x] == a[y] && b[x] == b[y]; });
  const std::int64_t swaps = sort_counting_swaps(order, b);
  const std::int64_t ties_b = tied_pairs(order, [&](auto x, auto y) { return b[x] == b[y]; });

  const std::int64_t untied_a = pairs - ties_a;
  const std::int64_t untied_b = pairs - ties_b;
  if (untied_a == 0 || untied_b == 0) {
    throw UndefinedCorrelation("kendall_tau: constant scores make the correlation undefined");
  }
  const std::int64_t concordant_minus_discordant = pairs - ties_a - ties_b + ties_both - 2 * swaps;
  const double tau = static_cast<double>(concordant_minus_discordant) /
                     std::sqrt(static_cast<double>(untied_a * untied_b));
  return std::clamp(tau, -1.0, 1.0);
}

double topk_overlap(std::span<const std::size_t> ranking_a, std::span<const std::size_t> ranking_b,
                    std::size_t k) {
  if (ranking_a.size() != ranking_b.size()) {
    throw std::invalid_argument("topk_overlap: rankings differ in length");
  }
  if (k == 0) throw std::invalid_argument("topk_overlap: k must be at least 1");
  if (k > ranking_a.size()) {
    throw std::invalid_argument("topk_overlap: k = " + std::to_string(k) + " exceeds length " +
                                std::to_string(ranking_a.size()));
  }
  std::vector<std::uint8_t> in_a(ranking_a.size(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    if (ranking_a[i] >= in_a.size()) throw std::invalid_argument("topk_overlap: bad position");
    in_a[ranking_a[i]] = 1;
  }
  std::size_t shared = 0;
  for (std::size_t i = 0; i < k; ++i) {
    if (ranking_b[i] >= in_a.size()) throw std::invalid_argument("topk_overlap: bad position");
    shared += in_a[ranking_b[i]];
  }
  return static_cast<double>(shared) / static_cast<double>(k);
}

std::vector<MetricSummary> aggregate(std::span<const DiscrepancyRecord> records) {
  if (records.empty()) throw std::invalid_argument("aggregate: no records");
  using Key = std::tuple<ExplainerKind, PerturbationSource, int>;
  std::map<Key, std::pair<std::vector<double>, std::vector<double>>> groups;
  for (const auto& r : records) {
    auto& g = groups[{r.explainer, r.source, r.level}];
    g.first.push_back(r.kendall_tau);
    g.second.push_back(r.topk_overlap);
  }
  auto summarize = [](const Key& key, std::string metric, const std::vector<double>& xs) {
    MetricSummary s;
    std::tie(s.explainer, s.source, s.level) = key;
    s.metric = std::move(metric);
    s.n = xs.size();
    // Shifted by the first value: identical inputs give an exact mean and zero
    // standard error.
    const double shift = xs.front();
    double sum = 0.0;
    for (double x : xs) sum += x - shift;
    const double centered_mean = sum / static_cast<double>(s.n);
    s.mean = shift + centered_mean;
    if (s.n > 1) {
      double ss = 0.0;
      for (double x : xs) ss += (x - shift - centered_mean) * (x - shift - centered_mean);
      s.std_error =
          std::sqrt(ss / static_cast<double>(s.n - 1)) / std::sqrt(static_cast<double>(s.n));
    }
    return s;
  };
  std::vector<MetricSummary> out;
  for (const auto& [key, values] : groups) {
    out.push_back(summarize(key, "kendall_tau", values.first));
    out.push_back(summarize(key, "topk_overlap", values.second));
  }
  return out;
}

}  // namespace expstab
