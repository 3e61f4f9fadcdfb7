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

// Explanation discrepancy metrics and their aggregation.

#ifndef EXPSTAB_METRICS_H_
#define EXPSTAB_METRICS_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "expstab/attribution.h"
#include "expstab/perturbation.h"

namespace expstab {

class UndefinedCorrelation : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Tie-corrected Kendall tau-b over all position pairs, O(l log l). Throws
// UndefinedCorrelation when either side is constant.
double kendall_tau(std::span<const double> a, std::span<const double> b);

// |top-k(a) ∩ top-k(b)| / k over token positions.
double topk_overlap(std::span<const std::size_t> ranking_a, std::span<const std::size_t> ranking_b,
                    std::size_t k);

inline constexpr std::size_t kDefaultTopK = 5;

struct DiscrepancyRecord {
  std::string doc_id;
  ExplainerKind explainer = ExplainerKind::kLime;
  PerturbationSource source = PerturbationSource::kOutput;
  int level = 0;
  double sigma2 = 0.0;
  std::uint64_t seed = 0;
  double kendall_tau = 1.0;
  double topk_overlap = 1.0;
  std::size_t k = kDefaultTopK;
  // The document was shorter than the requested k; k was lowered to its length.
  bool k_reduced = false;
  bool argmax_flipped = false;

  bool operator==(const DiscrepancyRecord&) const = default;
};

struct MetricSummary {
  ExplainerKind explainer = ExplainerKind::kLime;
  PerturbationSource source = PerturbationSource::kOutput;
  int level = 0;
  std::string metric;  // "kendall_tau" or "topk_overlap"
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t n = 0;

  bool operator==(const MetricSummary&) const = default;
};

// Mean and standard error (sample standard deviation / sqrt(n); 0 for n = 1)
// per (explainer, source, level, metric). Rows are ordered by explainer,
// source, level, then metric. Throws std::invalid_argument on empty input.
std::vector<MetricSummary> aggregate(std::span<const DiscrepancyRecord> records);

}  // namespace expstab

#endif  // EXPSTAB_METRICS_H_
