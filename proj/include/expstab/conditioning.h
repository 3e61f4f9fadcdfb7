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

// Condition-number simulation of the LIME kernel matrix: rows are sampled
// masks scaled by their kernel weight, and κ = σ_max / σ_min measures how
// strongly the least-squares solution can react to noise in the targets.

#ifndef EXPSTAB_CONDITIONING_H_
#define EXPSTAB_CONDITIONING_H_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "expstab/attribution.h"
#include "expstab/linalg.h"

namespace expstab {

// Row weight used when building the kernel matrix.
enum class SimulationKernel {
  // 1 - cos(mask, ones). Zero on the all-ones row, which the simulation never
  // draws.
  kCosineDistance,
  // cos(mask, ones) = sqrt(s / l), the weight LIME uses in the explainer.
  kCosineSimilarity,
};

std::string_view kernel_name(SimulationKernel kernel);
SimulationKernel parse_kernel(std::string_view name);

inline constexpr double kWellConditionedThreshold = 30.0;

// Row j is weight_j * mask_j. Throws std::invalid_argument if a row would be
// all zeros.
Matrix kernel_matrix(const MaskMatrix& masks, SimulationKernel kernel);

// m masks from generate_masks without the prepended original row.
Matrix build_kernel_matrix(std::size_t tokens, std::size_t samples, std::uint64_t seed,
                           SimulationKernel kernel = SimulationKernel::kCosineDistance);

class RankDeficientError : public std::runtime_error {
 public:
  RankDeficientError(const std::string& what, std::size_t effective_rank)
      : std::runtime_error(what), effective_rank_(effective_rank) {}
  std::size_t effective_rank() const { return effective_rank_; }

 private:
  std::size_t effective_rank_;
};

// Singular values of `a`, descending, by one-sided Jacobi.
std::vector<double> singular_values(const Matrix& a);

// σ_max / σ_min. Throws RankDeficientError when σ_min < 1e-12 σ_max.
double condition_number(const Matrix& a);

struct SimulationOptions {
  std::vector<std::size_t> lengths = {20, 30, 40};
  std::size_t iterations = 500;
  std::size_t samples = 200;
  std::uint64_t seed = 2023;
  SimulationKernel kernel = SimulationKernel::kCosineDistance;
  // 0 picks the hardware concurrency. The report does not depend on it.
  std::size_t threads = 0;
};

struct KappaBin {
  std::size_t length = 0;
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
};

struct ConditionReport {
  SimulationOptions options;
  // kappas[i][t]: iteration t at options.lengths[i].
  std::vector<std::vector<double>> kappas;
  // Unit-width bins [b, b + 1) from floor(min κ) to floor(max κ) per length.
  std::vector<KappaBin> bins;

  double mean(std::size_t length_index) const;
  double max(std::size_t length_index) const;
  // Fraction of draws with κ strictly below `bound`.
  double fraction_below(std::size_t length_index, double bound) const;
};

ConditionReport run_simulation(const SimulationOptions& options);

// length,iteration,kappa
void write_kappa_csv(std::ostream& out, const ConditionReport& report);
// length,bin_lo,bin_hi,count
void write_kappa_bins_csv(std::ostream& out, const ConditionReport& report);

}  // namespace expstab

#endif  // EXPSTAB_CONDITIONING_H_
