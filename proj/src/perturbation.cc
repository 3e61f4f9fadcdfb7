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

#include "expstab/perturbation.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "expstab/random.h"

namespace expstab {

std::string_view source_name(PerturbationSource source) {
  return source == PerturbationSource::kInput ? "input" : "output";
}

PerturbationSource parse_source(std::string_view name) {
  if (name == "input") return PerturbationSource::kInput;
  if (name == "output") return PerturbationSource::kOutput;
  throw std::invalid_argument("unknown perturbation source '" + std::string(name) + "'");
}

double level_to_sigma2(PerturbationSource source, int level) {
  if (level < 0 || level > kMaxLevel) {
    throw std::out_of_range("perturbation level " + std::to_string(level) + " outside 0.." +
                            std::to_string(kMaxLevel));
  }
  const auto i = static_cast<std::size_t>(level);
  return source == PerturbationSource::kInput ? kInputVariance[i] : kOutputVariance[i];
}

PerturbationSpec PerturbationSpec::at_level(PerturbationSource source, int level,
                                            std::uint64_t seed) {
  return PerturbationSpec{source, level, level_to_sigma2(source, level), seed};
}

void PerturbationSpec::validate() const {
  if (sigma2 != level_to_sigma2(source, level)) {
    throw std::invalid_argument("sigma2 " + std::to_string(sigma2) + " does not match level " +
                                std::to_string(level) + " of the " +
                                std::string(source_name(source)) + " schedule");
  }
}

ProbabilityVector perturb_probs(const ProbabilityVector& p, double sigma2,
                                std::span<const double> noise) {
  if (noise.size() != p.size()) throw std::invalid_argument("perturb_probs: noise length mismatch");
  if (sigma2 == 0.0) return p;
  std::vector<double> out(p.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    out[k] = std::max(p[k] + noise[k], kNumeratorFloor);
    sum += out[k];
  }
  for (double& v : out) v /= sum;
  return ProbabilityVector(std::move(out));
}

std::string_view noise_mode_name(OutputNoiseMode mode) {
  return mode == OutputNoiseMode::kPerQuery ? "per_query" : "per_document";
}

OutputNoiseMode parse_noise_mode(std::string_view name) {
  if (name == "per_query") return OutputNoiseMode::kPerQuery;
  if (name == "per_document") return OutputNoiseMode::kPerDocument;
  throw std::invalid_argument("unknown output noise mode '" + std::string(name) + "'");
}

OutputPerturbedSource::OutputPerturbedSource(const ProbabilitySource& base,
                                             const PerturbationSpec& spec, OutputNoiseMode mode)
    : base_(&base), spec_(spec), mode_(mode) {
  if (spec.source != PerturbationSource::kOutput) {
    throw std::invalid_argument("output wrapper requires an output-side perturbation spec");
  }
  spec_.validate();
}

std::vector<double> OutputPerturbedSource::noise(std::uint64_t query_index) const {
  const std::size_t c = num_classes();
  std::vector<double> eps(c, 0.0);
  if (spec_.sigma2 == 0.0) return eps;
  const std::uint64_t key = mode_ == OutputNoiseMode::kPerQuery ? query_index : 0;
  Rng rng(derive_seed(spec_.seed, {key}));
  const double stddev = std::sqrt(spec_.sigma2);
  for (double& e : eps) e = rng.normal(0.0, stddev);
  return eps;
}

ProbabilityVector OutputPerturbedSource::predict(std::span<const TokenId> tokens, Mask mask,
                                                 std::uint64_t query_index) const {
  auto p = base_->predict(tokens, mask, query_index);
  if (spec_.sigma2 == 0.0) return p;
  return perturb_probs(p, spec_.sigma2, noise(query_index));
}

OutputPerturbedSource wrap_output_perturbed(const ProbabilitySource& model,
                                            const PerturbationSpec& spec, OutputNoiseMode mode) {
  return OutputPerturbedSource(model, spec, mode);
}

}  // namespace expstab
