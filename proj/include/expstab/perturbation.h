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

// Gaussian perturbation schedule and output-probability perturbation.

#ifndef EXPSTAB_PERTURBATION_H_
#define EXPSTAB_PERTURBATION_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "expstab/blackbox.h"

namespace expstab {

enum class PerturbationSource { kInput, kOutput };

std::string_view source_name(PerturbationSource source);
PerturbationSource parse_source(std::string_view name);

inline constexpr int kMaxLevel = 4;

// Noise variance for each level 0..4: embeddings for the input side,
// probabilities for the output side.
inline constexpr std::array<double, kMaxLevel + 1> kInputVariance = {0.0, 0.05, 0.1, 0.15, 0.2};
inline constexpr std::array<double, kMaxLevel + 1> kOutputVariance = {0.0, 0.25, 0.5, 0.75, 1.0};

// Throws std::out_of_range outside 0..4.
double level_to_sigma2(PerturbationSource source, int level);

struct PerturbationSpec {
  PerturbationSource source = PerturbationSource::kOutput;
  int level = 0;
  double sigma2 = 0.0;
  std::uint64_t seed = 0;

  // sigma2 looked up from the level table.
  static PerturbationSpec at_level(PerturbationSource source, int level, std::uint64_t seed);
  // Throws std::invalid_argument if sigma2 disagrees with the table.
  void validate() const;

  bool operator==(const PerturbationSpec&) const = default;
};

// Lower bound on each numerator p_k + noise_k before normalization.
inline constexpr double kNumeratorFloor = 1e-6;

// (p_k + noise_k) / sum_i (p_i + noise_i), numerators floored at
// kNumeratorFloor. With sigma2 == 0 the input is returned untouched.
ProbabilityVector perturb_probs(const ProbabilityVector& p, double sigma2,
                                std::span<const double> noise);

// How the noise vectors of one explanation relate to each other.
enum class OutputNoiseMode {
  // An independent vector for every query index.
  kPerQuery,
  // One vector per wrapper, shared by every query.
  kPerDocument,
};

std::string_view noise_mode_name(OutputNoiseMode mode);
OutputNoiseMode parse_noise_mode(std::string_view name);

// Wraps a model and perturbs every probability vector it emits. Noise for a
// query is a pure function of (spec.seed, query index), so the wrapper is
// stateless and replayable.
class OutputPerturbedSource : public ProbabilitySource {
 public:
  OutputPerturbedSource(const ProbabilitySource& base, const PerturbationSpec& spec,
                        OutputNoiseMode mode = OutputNoiseMode::kPerQuery);

  std::size_t num_classes() const override { return base_->num_classes(); }
  using ProbabilitySource::predict;
  ProbabilityVector predict(std::span<const TokenId> tokens, Mask mask,
                            std::uint64_t query_index) const override;

  // N(0, sigma2) noise applied to the given query.
  std::vector<double> noise(std::uint64_t query_index) const;

  const PerturbationSpec& spec() const { return spec_; }
  OutputNoiseMode mode() const { return mode_; }

 private:
  const ProbabilitySource* base_;
  PerturbationSpec spec_;
  OutputNoiseMode mode_;
};

OutputPerturbedSource wrap_output_perturbed(const ProbabilitySource& model,
                                            const PerturbationSpec& spec,
                                            OutputNoiseMode mode = OutputNoiseMode::kPerQuery);

}  // namespace expstab

#endif  // EXPSTAB_PERTURBATION_H_
