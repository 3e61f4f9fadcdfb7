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

// Model-agnostic feature attribution: LIME, Kernel Shapley and Sample Shapley,
// plus exact Shapley values by coalition enumeration.
//
// All explainers see the model only through a CoalitionValue: the target-class
// probability of the document with some tokens deleted. Each call carries a
// query index so that noisy sources can key their noise on it; explainers
// assign indices deterministically and store results by index.

#ifndef EXPSTAB_ATTRIBUTION_H_
#define EXPSTAB_ATTRIBUTION_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "expstab/blackbox.h"
#include "expstab/corpus.h"

namespace expstab {

enum class ExplainerKind { kLime, kKernelShap, kSampleShapley };

std::string_view explainer_name(ExplainerKind kind);
// Accepts "lime", "kernel_shap", "sample_shapley".
ExplainerKind parse_explainer(std::string_view name);

// m x l presence matrix of pseudo examples.
class MaskMatrix {
 public:
  // Rows must be nonempty and of equal length; at least two rows.
  MaskMatrix(std::vector<std::uint8_t> bits, std::size_t rows, std::size_t cols,
             bool includes_full_mask);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  Mask row(std::size_t j) const { return {bits_.data() + j * cols_, cols_}; }
  std::size_t ones(std::size_t j) const { return ones_[j]; }
  bool includes_full_mask() const { return includes_full_mask_; }

  bool operator==(const MaskMatrix&) const = default;

 private:
  std::vector<std::uint8_t> bits_;
  std::vector<std::size_t> ones_;
  std::size_t rows_;
  std::size_t cols_;
  bool includes_full_mask_;
};

// Row 0 is the all-ones mask (the original document) when `prepend_full`.
// Every other row keeps each token independently with probability 1/2,
// redrawn until it is neither empty nor full. With one token the only
// nonempty mask is [1], so every row is [1].
MaskMatrix generate_masks(std::size_t tokens, std::size_t samples, std::uint64_t seed,
                          bool prepend_full = true);

// All 2^l - 1 nonempty masks, full mask first. l <= 20.
MaskMatrix enumerate_masks(std::size_t tokens);

class KernelWeights {
 public:
  // All weights must be positive and finite.
  explicit KernelWeights(std::vector<double> weights);
  std::span<const double> values() const { return weights_; }
  double operator[](std::size_t j) const { return weights_[j]; }
  std::size_t size() const { return weights_.size(); }

 private:
  std::vector<double> weights_;
};

// Cosine similarity of each row to the all-ones row: sqrt(ones / l).
KernelWeights lime_weights(const MaskMatrix& masks);

// Finite surrogate for the infinite Shapley kernel weight of the full mask.
inline constexpr double kShapleyFullMaskWeight = 1e6;

// (l - 1) / (C(l, s) s (l - s)) for a row with s ones; full rows get
// kShapleyFullMaskWeight.
KernelWeights shapley_kernel_weights(const MaskMatrix& masks);
double shapley_kernel_weight(std::size_t tokens, std::size_t ones);

inline constexpr double kDefaultRidge = 1e-8;

struct WlsSolution {
  std::vector<double> coefficients;
  double intercept = 0.0;
};

class SolveError : public std::runtime_error {
 public:
  SolveError(const std::string& what, double condition_estimate)
      : std::runtime_error(what), condition_estimate_(condition_estimate) {}
  double condition_estimate() const { return condition_estimate_; }

 private:
  double condition_estimate_;
};

// Minimizes sum_j w_j (y_j - coef . mask_j - intercept)^2 through the normal
// equations, with a ridge of `ridge` on the coefficient block only.
WlsSolution weighted_least_squares(const MaskMatrix& masks, std::span<const double> targets,
                                   const KernelWeights& weights, bool fit_intercept,
                                   double ridge = kDefaultRidge);

// Positions by descending score; ties go to the lower position.
std::vector<std::size_t> rank_positions(std::span<const double> scores);

struct Explanation {
  ExplainerKind explainer = ExplainerKind::kLime;
  ClassId target = 0;
  std::vector<double> scores;
  std::vector<std::size_t> ranking;
  // LIME intercept, or the empty-coalition value for the Shapley methods.
  double base_value = 0.0;
  std::uint64_t seed = 0;
  // Pseudo examples (LIME, Kernel Shapley) or permutations (Sample Shapley).
  std::size_t samples = 0;

  bool operator==(const Explanation&) const = default;
};

using CoalitionValue = std::function<double(Mask mask, std::uint64_t query_index)>;

// Target-class probability of `tokens` under `mask`. Holds references.
CoalitionValue model_value(const ProbabilitySource& model, std::span<const TokenId> tokens,
                           ClassId target);

inline constexpr std::size_t kDefaultSamples = 200;

struct LimeOptions {
  std::size_t samples = kDefaultSamples;
  std::uint64_t seed = 0;
};

struct KernelShapOptions {
  std::size_t samples = kDefaultSamples;
  std::uint64_t seed = 0;
  // Use every nonempty coalition instead of sampled masks.
  bool exhaustive = false;
};

struct SampleShapleyOptions {
  std::size_t permutations = 10;
  std::uint64_t seed = 0;
  // Walk all l! orders (l <= 10) instead of sampling.
  bool exhaustive = false;
};

// Query indices: row j of the mask matrix is query j; the empty coalition,
// when needed, is query `samples`.
Explanation lime(std::size_t tokens, const CoalitionValue& value, const LimeOptions& options);
// Regresses value(mask) - value(empty) on the masks without an intercept, so
// that exhaustive enumeration recovers exact Shapley values.
Explanation kernel_shap(std::size_t tokens, const CoalitionValue& value,
                        const KernelShapOptions& options);
// Queries are numbered in evaluation order: permutation p, prefix length t is
// query p * (l + 1) + t.
Explanation sample_shapley(std::size_t tokens, const CoalitionValue& value,
                           const SampleShapleyOptions& options);

inline constexpr std::size_t kMaxExactShapleyTokens = 12;

// Textbook Shapley sum over all 2^l coalitions; query index is the coalition
// bitmask. Throws std::invalid_argument for l > kMaxExactShapleyTokens.
std::vector<double> exact_shapley(std::size_t tokens, const CoalitionValue& value);

Explanation explain_lime(const ProbabilitySource& model, const Document& doc, ClassId target,
                         const LimeOptions& options);
Explanation explain_kernel_shap(const ProbabilitySource& model, const Document& doc,
                                ClassId target, const KernelShapOptions& options);
Explanation explain_sample_shapley(const ProbabilitySource& model, const Document& doc,
                                   ClassId target, const SampleShapleyOptions& options);
std::vector<double> exact_shapley(const ProbabilitySource& model, const Document& doc,
                                  ClassId target);

struct ExplainerSettings {
  std::size_t samples = kDefaultSamples;
  std::size_t permutations = 10;
};

// Dispatch on kind; `seed` seeds mask or permutation sampling.
Explanation explain(ExplainerKind kind, const ProbabilitySource& model,
                    std::span<const TokenId> tokens, ClassId target,
                    const ExplainerSettings& settings, std::uint64_t seed);

}  // namespace expstab

#endif  // EXPSTAB_ATTRIBUTION_H_
