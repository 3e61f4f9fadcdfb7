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

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "expstab/random.h"
#include "oracles.h"

namespace expstab {
namespace {

TEST(KendallTau, IdenticalScoresGiveOne) {
  const std::vector<double> a = {0.9, 0.5, 0.3};
  EXPECT_DOUBLE_EQ(kendall_tau(a, a), 1.0);
}

TEST(KendallTau, ReversalGivesMinusOne) {
  const std::vector<double> a = {0.9, 0.5, 0.3};
  const std::vector<double> b = {0.3, 0.5, 0.9};
  EXPECT_DOUBLE_EQ(kendall_tau(a, b), -1.0);
}

TEST(KendallTau, OneSwappedPairGivesOneThird) {
  const std::vector<double> a = {0.9, 0.5, 0.3};
  const std::vector<double> b = {0.5, 0.9, 0.3};
  EXPECT_NEAR(kendall_tau(a, b), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(testing::brute_force_kendall(a, b), 1.0 / 3.0, 1e-15);
}

TEST(KendallTau, ConstantSideIsUndefined) {
  const std::vector<double> a = {0.2, 0.2, 0.2};
  const std::vector<double> b = {0.1, 0.5, 0.3};
  EXPECT_THROW(kendall_tau(a, b), UndefinedCorrelation);
  EXPECT_THROW(kendall_tau(b, a), UndefinedCorrelation);
}

TEST(KendallTau, RejectsBadInput) {
  const std::vector<double> a = {0.2, 0.1};
  const std::vector<double> b = {0.1, 0.5, 0.3};
  EXPECT_THROW(kendall_tau(a, b), std::invalid_argument);
  const std::vector<double> one = {1.0};
  EXPECT_THROW(kendall_tau(one, one), std::invalid_argument);
  const std::vector<double> nan = {1.0, std::nan("")};
  EXPECT_THROW(kendall_tau(nan, a), std::invalid_argument);
}

std::vector<double> random_scores(Rng& rng, std::size_t l, bool with_ties) {
  std::vector<double> v(l);
  for (double& x : v) {
    x = with_ties ? static_cast<double>(rng.below(4)) : rng.normal();
  }
  return v;
}

TEST(KendallTau, MatchesPairCountingOracle) {
  Rng rng(99);
  int compared = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t l = 2 + rng.below(49);
    const bool ties = trial % 2 == 1;
    const auto a = random_scores(rng, l, ties);
    const auto b = random_scores(rng, l, ties);
    double expected = 0.0;
    try {
      expected = testing::brute_force_kendall(a, b);
    } catch (...) {
      continue;
    }
    if (std::isnan(expected)) {
      EXPECT_THROW(kendall_tau(a, b), UndefinedCorrelation);
      continue;
    }
    EXPECT_EQ(kendall_tau(a, b), expected) << "trial " << trial;
    ++compared;
  }
  EXPECT_GE(compared, 100);
}

TEST(KendallTau, SymmetricAndInvariantToMonotoneTransforms) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t l = 2 + rng.below(30);
    const auto a = random_scores(rng, l, trial % 3 == 0);
    const auto b = random_scores(rng, l, trial % 3 == 0);
    if (testing::brute_force_kendall(a, a) != 1.0) continue;
    if (testing::brute_force_kendall(b, b) != 1.0) continue;
    std::vector<double> ta(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) ta[i] = std::exp(3.0 * a[i]) + 7.0;
    const double tau = kendall_tau(a, b);
    EXPECT_EQ(tau, kendall_tau(b, a));
    EXPECT_NEAR(tau, kendall_tau(ta, b), 1e-15);
    EXPECT_GE(tau, -1.0);
    EXPECT_LE(tau, 1.0);
  }
}

TEST(TopkOverlap, Cases) {
  const std::vector<std::size_t> r = {3, 1, 0, 2};
  for (std::size_t k = 1; k <= 4; ++k) EXPECT_EQ(topk_overlap(r, r, k), 1.0);
  // Tokens: 0 "I", 1 "love", 2 "classical", 3 "music".
  const std::vector<std::size_t> baseline = {1, 2, 0, 3};
  const std::vector<std::size_t> perturbed = {2, 3, 1, 0};
  EXPECT_EQ(topk_overlap(baseline, perturbed, 2), 0.5);
  const std::vector<std::size_t> a = {0, 1, 2, 3};
  const std::vector<std::size_t> b = {2, 3, 0, 1};
  EXPECT_EQ(topk_overlap(a, b, 2), 0.0);
  EXPECT_THROW(topk_overlap(a, b, 5), std::invalid_argument);
  EXPECT_THROW(topk_overlap(a, b, 0), std::invalid_argument);
}

TEST(TopkOverlap, MatchesSetIntersectionOracle) {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t l = 1 + rng.below(50);
    std::vector<std::size_t> a(l), b(l);
    for (std::size_t i = 0; i < l; ++i) a[i] = b[i] = i;
    rng.shuffle(std::span<std::size_t>(a));
    rng.shuffle(std::span<std::size_t>(b));
    const std::size_t k = 1 + rng.below(l);
    EXPECT_EQ(topk_overlap(a, b, k), testing::brute_force_overlap(a, b, k));
  }
}

DiscrepancyRecord record(double tau, double overlap) {
  DiscrepancyRecord r;
  r.doc_id = "d";
  r.source = PerturbationSource::kInput;
  r.level = 2;
  r.sigma2 = 0.1;
  r.kendall_tau = tau;
  r.topk_overlap = overlap;
  return r;
}

TEST(Aggregate, SingleRecord) {
  const std::vector<DiscrepancyRecord> rs = {record(0.7, 0.6)};
  const auto s = aggregate(rs);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].metric, "kendall_tau");
  EXPECT_EQ(s[0].mean, 0.7);
  EXPECT_EQ(s[0].std_error, 0.0);
  EXPECT_EQ(s[0].n, 1u);
  EXPECT_EQ(s[1].metric, "topk_overlap");
  EXPECT_EQ(s[1].mean, 0.6);
}

TEST(Aggregate, MeanAndStandardError) {
  const std::vector<DiscrepancyRecord> rs = {record(0.4, 1.0), record(0.6, 1.0)};
  const auto s = aggregate(rs);
  EXPECT_NEAR(s[0].mean, 0.5, 1e-15);
  EXPECT_NEAR(s[0].std_error, std::sqrt(0.02) / std::sqrt(2.0), 1e-15);
  EXPECT_EQ(s[1].std_error, 0.0);
}

TEST(Aggregate, EqualValuesHaveZeroError) {
  std::vector<DiscrepancyRecord> rs(37, record(0.1, 0.3));
  const auto s = aggregate(rs);
  EXPECT_EQ(s[0].mean, 0.1);
  EXPECT_EQ(s[0].std_error, 0.0);
  EXPECT_EQ(s[1].mean, 0.3);
  EXPECT_EQ(s[1].std_error, 0.0);
  EXPECT_EQ(s[0].n, 37u);
}

TEST(Aggregate, GroupsByExplainerSourceAndLevel) {
  std::vector<DiscrepancyRecord> rs = {record(0.5, 0.5), record(0.5, 0.5)};
  rs[1].level = 3;
  rs.push_back(record(0.2, 0.2));
  rs.back().explainer = ExplainerKind::kSampleShapley;
  EXPECT_EQ(aggregate(rs).size(), 6u);
  EXPECT_THROW(aggregate({}), std::invalid_argument);
}

}  // namespace
}  // namespace expstab
