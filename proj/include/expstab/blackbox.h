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

// Black-box classifier contract and the built-in mean-embedding classifier.

#ifndef EXPSTAB_BLACKBOX_H_
#define EXPSTAB_BLACKBOX_H_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <vector>

#include "expstab/corpus.h"
#include "expstab/linalg.h"

namespace expstab {

// A point on the class simplex. Construction validates the invariants.
class ProbabilityVector {
 public:
  static constexpr double kSumTolerance = 1e-9;

  explicit ProbabilityVector(std::vector<double> probs);
  // Numerically stable softmax.
  static ProbabilityVector from_logits(std::span<const double> logits);

  std::span<const double> values() const { return probs_; }
  double operator[](std::size_t k) const { return probs_[k]; }
  std::size_t size() const { return probs_.size(); }
  // Lowest index among maxima.
  ClassId argmax() const;

  bool operator==(const ProbabilityVector&) const = default;

 private:
  std::vector<double> probs_;
};

// Presence bits, one per token. An empty span means every token is present.
using Mask = std::span<const std::uint8_t>;

// Anything the explainers can query. `query_index` numbers the queries of one
// explanation run; sources that inject per-query noise key it on this index,
// deterministic sources ignore it. Implementations must be safe for concurrent
// const calls.
class ProbabilitySource {
 public:
  virtual ~ProbabilitySource() = default;
  virtual std::size_t num_classes() const = 0;
  virtual ProbabilityVector predict(std::span<const TokenId> tokens, Mask mask,
                                    std::uint64_t query_index) const = 0;

  ProbabilityVector predict(std::span<const TokenId> tokens) const {
    return predict(tokens, {}, 0);
  }
};

// Mean-pool the embeddings of present tokens, then a linear head and softmax.
// Masked-out tokens are deleted from the pool; an empty pool is the zero
// vector, so the prediction reduces to softmax(bias). Pad tokens never pool.
class EmbeddingClassifier : public ProbabilitySource {
 public:
  EmbeddingClassifier(std::size_t vocab_size, std::size_t dim, std::size_t num_classes);

  // Gaussian init with standard deviation `scale`; pad row zero.
  static EmbeddingClassifier random_init(std::size_t vocab_size, std::size_t dim,
                                         std::size_t num_classes, double scale,
                                         std::uint64_t seed);

  std::size_t num_classes() const override { return bias_.size(); }
  std::size_t vocab_size() const { return embeddings_.rows(); }
  std::size_t dim() const { return embeddings_.cols(); }

  using ProbabilitySource::predict;
  ProbabilityVector predict(std::span<const TokenId> tokens, Mask mask,
                            std::uint64_t query_index) const override;

  std::vector<double> pooled(std::span<const TokenId> tokens, Mask mask) const;
  std::vector<double> logits(std::span<const TokenId> tokens, Mask mask) const;

  Matrix& embeddings() { return embeddings_; }
  const Matrix& embeddings() const { return embeddings_; }
  Matrix& weights() { return weights_; }
  const Matrix& weights() const { return weights_; }
  std::vector<double>& bias() { return bias_; }
  const std::vector<double>& bias() const { return bias_; }

  // Versioned text checkpoint; values are hexadecimal floats so the round
  // trip is bit-exact.
  void save(std::ostream& out) const;
  static EmbeddingClassifier load(std::istream& in);

  bool operator==(const EmbeddingClassifier& other) const {
    return embeddings_ == other.embeddings_ && weights_ == other.weights_ && bias_ == other.bias_;
  }

 private:
  Matrix embeddings_;  // vocab_size x dim
  Matrix weights_;     // dim x num_classes
  std::vector<double> bias_;
};

struct TrainOptions {
  std::size_t epochs = 20;
  double learning_rate = 0.5;
  std::uint64_t seed = 1;
  std::size_t dim = 64;
  double init_scale = 0.1;
};

struct TrainReport {
  double train_accuracy = 0.0;
  std::vector<double> epoch_loss;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Per-example SGD on softmax cross-entropy, one shuffled pass per epoch.
// Deterministic given the seed.
EmbeddingClassifier train(std::span<const Document> documents, std::size_t vocab_size,
                          std::size_t num_classes, const TrainOptions& options,
                          TrainReport* report = nullptr);

double accuracy(const ProbabilitySource& model, std::span<const Document> documents);

// The base model with N(0, sigma2) noise added once to every embedding entry
// (pad row excepted). A deterministic function of (base, sigma2, seed).
class PerturbedModel : public ProbabilitySource {
 public:
  PerturbedModel(const EmbeddingClassifier& base, double sigma2_input, std::uint64_t seed);

  std::size_t num_classes() const override { return model_.num_classes(); }
  using ProbabilitySource::predict;
  ProbabilityVector predict(std::span<const TokenId> tokens, Mask mask,
                            std::uint64_t query_index) const override {
    return model_.predict(tokens, mask, query_index);
  }

  double sigma2_input() const { return sigma2_; }
  std::uint64_t seed() const { return seed_; }
  const EmbeddingClassifier& perturbed() const { return model_; }

 private:
  EmbeddingClassifier model_;
  double sigma2_;
  std::uint64_t seed_;
};

PerturbedModel perturb_model(const EmbeddingClassifier& model, double sigma2_input,
                             std::uint64_t seed);

}  // namespace expstab

#endif  // EXPSTAB_BLACKBOX_H_
