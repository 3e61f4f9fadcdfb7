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

#include "expstab/blackbox.h"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "expstab/corpus.h"

namespace expstab {
namespace {

TEST(ProbabilityVector, ValidatesSimplex) {
  EXPECT_NO_THROW(ProbabilityVector({0.25, 0.75}));
  EXPECT_THROW(ProbabilityVector({1.0}), std::invalid_argument);
  EXPECT_THROW(ProbabilityVector({0.6, 0.6}), std::invalid_argument);
  EXPECT_THROW(ProbabilityVector({-0.1, 1.1}), std::invalid_argument);
  EXPECT_EQ(ProbabilityVector({0.4, 0.4, 0.2}).argmax(), 0);
  EXPECT_EQ(ProbabilityVector({0.1, 0.5, 0.4}).argmax(), 1);
}

TEST(ProbabilityVector, SoftmaxIsShiftInvariantAndStable) {
  const std::vector<double> z = {1.5, -0.3, 0.2};
  const auto p = ProbabilityVector::from_logits(z);
  for (double c : {-50.0, 3.0, 700.0}) {
    std::vector<double> shifted = z;
    for (double& v : shifted) v += c;
    const auto q = ProbabilityVector::from_logits(shifted);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(p[k], q[k], 1e-12);
  }
  const double denom = std::exp(1.5) + std::exp(-0.3) + std::exp(0.2);
  EXPECT_NEAR(p[0], std::exp(1.5) / denom, 1e-15);
}

EmbeddingClassifier small_model(std::uint64_t seed = 3) {
  return EmbeddingClassifier::random_init(12, 8, 3, 0.5, seed);
}

TEST(EmbeddingClassifier, FullMaskEqualsUnmasked) {
  const auto m = small_model();
  const std::vector<TokenId> tokens = {2, 5, 7, 2, 11};
  const std::vector<std::uint8_t> ones(tokens.size(), 1);
  EXPECT_EQ(m.predict(tokens, ones, 0), m.predict(tokens));
}

TEST(EmbeddingClassifier, MaskingEqualsDeletion) {
  const auto m = small_model();
  const std::vector<TokenId> tokens = {2, 5, 7, 3, 11};
  const std::vector<std::uint8_t> mask = {1, 0, 1, 0, 1};
  const std::vector<TokenId> kept = {2, 7, 11};
  EXPECT_EQ(m.predict(tokens, mask, 0), m.predict(kept));
}

TEST(EmbeddingClassifier, EmptyPoolIsSoftmaxOfBias) {
  auto m = small_model();
  m.bias() = {0.3, -0.1, 0.9};
  const std::vector<TokenId> tokens = {4, 6};
  const std::vector<std::uint8_t> none = {0, 0};
  EXPECT_EQ(m.predict(tokens, none, 0), ProbabilityVector::from_logits(m.bias()));
  const std::vector<TokenId> pads = {Vocabulary::kPadId};
  EXPECT_EQ(m.predict(pads), ProbabilityVector::from_logits(m.bias()));
}

TEST(EmbeddingClassifier, RejectsBadInput) {
  const auto m = small_model();
  const std::vector<TokenId> out_of_range = {2, 12};
  EXPECT_THROW(m.predict(out_of_range), std::out_of_range);
  const std::vector<TokenId> tokens = {2, 3};
  const std::vector<std::uint8_t> short_mask = {1};
  EXPECT_THROW(m.predict(tokens, short_mask, 0), std::invalid_argument);
}

TEST(EmbeddingClassifier, CheckpointRoundTripIsBitExact) {
  const auto m = small_model(9);
  std::stringstream ss;
  m.save(ss);
  const auto back = EmbeddingClassifier::load(ss);
  EXPECT_EQ(back, m);
  std::istringstream bad("expstab-embedding-classifier 9\n");
  EXPECT_THROW(EmbeddingClassifier::load(bad), DataError);
}

// Class 0 owns tokens 2..6, class 1 owns tokens 7..11; documents mix their
// own class's tokens with shared tokens 12..13.
std::vector<Document> separable_corpus() {
  std::vector<Document> docs;
  for (int i = 0; i < 20; ++i) {
    Document d;
    d.label = i % 2;
    const TokenId base = d.label == 0 ? 2 : 7;
    d.token_ids = {static_cast<TokenId>(base + i % 5), static_cast<TokenId>(base + (i + 2) % 5),
                   static_cast<TokenId>(12 + i % 2)};
    d.tokens.assign(d.token_ids.size(), "x");
    docs.push_back(d);
  }
  return docs;
}

TEST(Train, SeparableToySetReachesPerfectAccuracy) {
  const auto docs = separable_corpus();
  TrainOptions opt;
  opt.epochs = 50;
  opt.dim = 8;
  TrainReport report;
  const auto m = train(docs, 14, 2, opt, &report);
  EXPECT_EQ(report.train_accuracy, 1.0);
  EXPECT_EQ(accuracy(m, docs), 1.0);
  EXPECT_EQ(report.epoch_loss.size(), 50u);
  EXPECT_LT(report.epoch_loss.back(), report.epoch_loss.front());
}

TEST(Train, ZeroLearningRateLeavesInitialParameters) {
  const auto docs = separable_corpus();
  TrainOptions opt;
  opt.learning_rate = 0.0;
  opt.epochs = 3;
  opt.dim = 8;
  const auto m = train(docs, 14, 2, opt);
  TrainOptions other = opt;
  other.epochs = 1;
  EXPECT_EQ(m, train(docs, 14, 2, other));
}

TEST(Train, DeterministicPerSeed) {
  const auto docs = separable_corpus();
  TrainOptions opt;
  opt.epochs = 5;
  opt.dim = 8;
  EXPECT_EQ(train(docs, 14, 2, opt), train(docs, 14, 2, opt));
  TrainOptions other = opt;
  other.seed = 2;
  EXPECT_FALSE(train(docs, 14, 2, opt) == train(docs, 14, 2, other));
}

TEST(Train, Errors) {
  auto docs = separable_corpus();
  TrainOptions opt;
  opt.dim = 8;
  opt.learning_rate = 1e300;
  EXPECT_THROW(train(docs, 14, 2, opt), TrainingError);
  for (auto& d : docs) d.label = 1;
  EXPECT_THROW(train(docs, 14, 2, TrainOptions{}), TrainingError);
}

TEST(PerturbedModel, ZeroVarianceEqualsBase) {
  const auto m = small_model();
  const auto p = perturb_model(m, 0.0, 5);
  const std::vector<TokenId> tokens = {2, 5, 7};
  const std::vector<std::uint8_t> mask = {0, 1, 1};
  EXPECT_EQ(p.predict(tokens), m.predict(tokens));
  EXPECT_EQ(p.predict(tokens, mask, 4), m.predict(tokens, mask, 4));
  EXPECT_THROW(perturb_model(m, -0.1, 5), std::invalid_argument);
}

TEST(PerturbedModel, SeedsGiveDifferentPredictions) {
  const auto m = small_model();
  const auto a = perturb_model(m, 0.1, 1);
  const auto b = perturb_model(m, 0.1, 2);
  const auto a2 = perturb_model(m, 0.1, 1);
  const std::vector<TokenId> tokens = {2, 5, 7};
  EXPECT_FALSE(a.predict(tokens) == b.predict(tokens));
  EXPECT_EQ(a.predict(tokens), a2.predict(tokens));
  EXPECT_FALSE(a.predict(tokens) == m.predict(tokens));
}

}  // namespace
}  // namespace expstab
