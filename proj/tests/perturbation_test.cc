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

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "expstab/blackbox.h"
#include "expstab/random.h"

namespace expstab {
namespace {

TEST(LevelToSigma2, Table) {
  EXPECT_EQ(level_to_sigma2(PerturbationSource::kInput, 2), 0.1);
  EXPECT_EQ(level_to_sigma2(PerturbationSource::kInput, 3), 0.15);
  EXPECT_EQ(level_to_sigma2(PerturbationSource::kOutput, 3), 0.75);
  EXPECT_EQ(level_to_sigma2(PerturbationSource::kOutput, 0), 0.0);
  EXPECT_EQ(level_to_sigma2(PerturbationSource::kInput, 0), 0.0);
  const double input[] = {0.0, 0.05, 0.1, 0.15, 0.2};
  const double output[] = {0.0, 0.25, 0.5, 0.75, 1.0};
  for (int level = 0; level <= 4; ++level) {
    EXPECT_EQ(level_to_sigma2(PerturbationSource::kInput, level), input[level]);
    EXPECT_EQ(level_to_sigma2(PerturbationSource::kOutput, level), output[level]);
  }
  EXPECT_THROW(level_to_sigma2(PerturbationSource::kOutput, 5), std::out_of_range);
  EXPECT_THROW(level_to_sigma2(PerturbationSource::kInput, -1), std::out_of_range);
}

TEST(PerturbationSpec, ValidatesAgainstTable) {
  const auto spec = PerturbationSpec::at_level(PerturbationSource::kOutput, 2, 9);
  EXPECT_EQ(spec.sigma2, 0.5);
  EXPECT_NO_THROW(spec.validate());
  auto bad = spec;
  bad.sigma2 = 0.4;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(PerturbProbs, WorkedExample) {
  const ProbabilityVector p({0.7, 0.3});
  const std::vector<double> noise = {0.1, -0.05};
  const auto q = perturb_probs(p, 0.25, noise);
  EXPECT_NEAR(q[0], 0.8 / 1.05, 1e-15);
  EXPECT_NEAR(q[1], 0.25 / 1.05, 1e-15);
  EXPECT_NEAR(q[0], 0.761905, 1e-6);
  EXPECT_NEAR(q[1], 0.238095, 1e-6);
}

TEST(PerturbProbs, ZeroNoiseIsIdentity) {
  const ProbabilityVector p({0.2, 0.5, 0.3});
  const std::vector<double> zero = {0.0, 0.0, 0.0};
  EXPECT_EQ(perturb_probs(p, 0.5, zero), p);
  const std::vector<double> any = {0.4, -0.1, 0.2};
  EXPECT_EQ(perturb_probs(p, 0.0, any), p);
}

TEST(PerturbProbs, SymmetricNoiseCancels) {
  const ProbabilityVector p({0.5, 0.5});
  for (double c : {-0.49, -0.2, 0.0, 0.3, 5.0}) {
    const std::vector<double> noise = {c, c};
    const auto q = perturb_probs(p, 1.0, noise);
    EXPECT_DOUBLE_EQ(q[0], 0.5);
    EXPECT_DOUBLE_EQ(q[1], 0.5);
  }
}

TEST(PerturbProbs, StaysOnSimplexForRandomDraws) {
  Rng rng(2024);
  for (int draw = 0; draw < 10000; ++draw) {
    const std::size_t c = 2 + rng.below(4);
    std::vector<double> raw(c);
    double total = 0.0;
    for (double& v : raw) total += (v = rng.uniform());
    for (double& v : raw) v /= total;
    const ProbabilityVector p = ProbabilityVector::from_logits(std::vector<double>(c, 0.0));
    const double sigma2 = (draw % 4 == 0) ? 1.0 : rng.uniform();
    std::vector<double> noise(c);
    for (double& v : noise) v = rng.normal(0.0, std::sqrt(sigma2));
    const auto q = perturb_probs(draw % 2 ? ProbabilityVector(raw) : p, sigma2, noise);
    double sum = 0.0;
    for (double v : q.values()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
      sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
  }
}

TEST(PerturbProbs, RejectsLengthMismatch) {
  const ProbabilityVector p({0.5, 0.5});
  const std::vector<double> noise = {0.1};
  EXPECT_THROW(perturb_probs(p, 0.5, noise), std::invalid_argument);
}

class FixedModel : public ProbabilitySource {
 public:
  std::size_t num_classes() const override { return 3; }
  using ProbabilitySource::predict;
  ProbabilityVector predict(std::span<const TokenId> tokens, Mask mask,
                            std::uint64_t) const override {
    double present = 0.0;
    for (std::size_t i = 0; i < tokens.size(); ++i) present += mask.empty() || mask[i] ? 1.0 : 0.0;
    return ProbabilityVector::from_logits(std::vector<double>{present, 1.0, -present});
  }
};

TEST(OutputPerturbedSource, LevelZeroMatchesBaseModel) {
  FixedModel base;
  const auto wrapped =
      wrap_output_perturbed(base, PerturbationSpec::at_level(PerturbationSource::kOutput, 0, 3));
  const std::vector<TokenId> tokens = {2, 3, 4};
  const std::vector<std::uint8_t> mask = {1, 0, 1};
  for (std::uint64_t q = 0; q < 50; ++q) {
    EXPECT_EQ(wrapped.predict(tokens, mask, q), base.predict(tokens, mask, q));
  }
}

TEST(OutputPerturbedSource, ReplayIsBitIdenticalAndQueriesAreIndependent) {
  FixedModel base;
  const auto spec = PerturbationSpec::at_level(PerturbationSource::kOutput, 4, 11);
  const auto a = wrap_output_perturbed(base, spec);
  const auto b = wrap_output_perturbed(base, spec);
  const std::vector<TokenId> tokens = {2, 3, 4};
  std::size_t distinct = 0;
  for (std::uint64_t q = 0; q < 20; ++q) {
    EXPECT_EQ(a.predict(tokens, {}, q), b.predict(tokens, {}, q));
    if (!(a.predict(tokens, {}, q) == a.predict(tokens, {}, q + 1))) ++distinct;
  }
  EXPECT_GE(distinct, 19u);
}

TEST(OutputPerturbedSource, PerDocumentModeSharesOneVector) {
  FixedModel base;
  const auto spec = PerturbationSpec::at_level(PerturbationSource::kOutput, 2, 11);
  const auto w = wrap_output_perturbed(base, spec, OutputNoiseMode::kPerDocument);
  EXPECT_EQ(w.noise(0), w.noise(123));
  const std::vector<TokenId> tokens = {2, 3};
  EXPECT_EQ(w.predict(tokens, {}, 0), w.predict(tokens, {}, 7));
}

TEST(OutputPerturbedSource, NoiseHasRequestedVariance) {
  FixedModel base;
  const auto spec = PerturbationSpec::at_level(PerturbationSource::kOutput, 2, 5);
  const auto w = wrap_output_perturbed(base, spec);
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int q = 0; q < n; ++q) {
    for (double e : w.noise(static_cast<std::uint64_t>(q))) {
      sum += e;
      sq += e * e;
    }
  }
  const double count = 3.0 * n;
  EXPECT_NEAR(sum / count, 0.0, 0.02);
  EXPECT_NEAR(sq / count, 0.5, 0.02);
}

TEST(OutputPerturbedSource, RequiresOutputSpec) {
  FixedModel base;
  const auto spec = PerturbationSpec::at_level(PerturbationSource::kInput, 1, 1);
  EXPECT_THROW(wrap_output_perturbed(base, spec), std::invalid_argument);
}

}  // namespace
}  // namespace expstab
