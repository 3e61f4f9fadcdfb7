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

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <string>

#include "expstab/random.h"

namespace expstab {

ProbabilityVector::ProbabilityVector(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.size() < 2) throw std::invalid_argument("probability vector needs at least 2 classes");
  double sum = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw std::invalid_argument("probability entry outside [0, 1]: " + std::to_string(p));
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > kSumTolerance) {
    throw std::invalid_argument("probabilities sum to " + std::to_string(sum));
  }
}

ProbabilityVector ProbabilityVector::from_logits(std::span<const double> logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    p[k] = std::exp(logits[k] - top);
    sum += p[k];
  }
  for (double& v : p) v /= sum;
  return ProbabilityVector(std::move(p));
}

ClassId ProbabilityVector::argmax() const {
  return static_cast<ClassId>(std::max_element(probs_.begin(), probs_.end()) - probs_.begin());
}

EmbeddingClassifier::EmbeddingClassifier(std::size_t vocab_size, std::size_t dim,
                                         std::size_t num_classes)
    : embeddings_(vocab_size, dim), weights_(dim, num_classes), bias_(num_classes, 0.0) {
  if (vocab_size <= static_cast<std::size_t>(Vocabulary::kUnknownId) || dim == 0 ||
      num_classes < 2) {
    throw std::invalid_argument("EmbeddingClassifier: invalid shape");
  }
}

EmbeddingClassifier EmbeddingClassifier::random_init(std::size_t vocab_size, std::size_t dim,
                                                     std::size_t num_classes, double scale,
                                                     std::uint64_t seed) {
  EmbeddingClassifier model(vocab_size, dim, num_classes);
  Rng rng(seed);
  for (std::size_t v = 0; v < vocab_size; ++v) {
    if (v == static_cast<std::size_t>(Vocabulary::kPadId)) continue;
    for (double& x : model.embeddings_.row(v)) x = rng.normal(0.0, scale);
  }
  for (double& x : model.weights_.data()) x = rng.normal(0.0, scale);
  return model;
}

std::vector<double> EmbeddingClassifier::pooled(std::span<const TokenId> tokens, Mask mask) const {
  if (tokens.empty()) throw std::invalid_argument("predict: empty token sequence");
  if (!mask.empty() && mask.size() != tokens.size()) {
    throw std::invalid_argument("predict: mask length differs from token count");
  }
  std::vector<double> h(dim(), 0.0);
  std::size_t count = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const TokenId id = tokens[i];
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_size()) {
      throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary of size " +
                              std::to_string(vocab_size()));
    }
    if (id == Vocabulary::kPadId || (!mask.empty() && mask[i] == 0)) continue;
    const auto e = embeddings_.row(static_cast<std::size_t>(id));
    for (std::size_t j = 0; j < h.size(); ++j) h[j] += e[j];
    ++count;
  }
  if (count > 0) {
    for (double& x : h) x /= static_cast<double>(count);
  }
  return h;
}

std::vector<double> EmbeddingClassifier::logits(std::span<const TokenId> tokens, Mask mask) const {
  const auto h = pooled(tokens, mask);
  std::vector<double> z = bias_;
  for (std::size_t j = 0; j < h.size(); ++j) {
    if (h[j] == 0.0) continue;
    const auto w = weights_.row(j);
    for (std::size_t k = 0; k < z.size(); ++k) z[k] += h[j] * w[k];
  }
  return z;
}

ProbabilityVector EmbeddingClassifier::predict(std::span<const TokenId> tokens, Mask mask,
                                               std::uint64_t /*query_index*/) const {
  const auto z = logits(tokens, mask);
  return ProbabilityVector::from_logits(z);
}

namespace {

constexpr std::string_view kCheckpointMagic = "expstab-embedding-classifier";
constexpr int kCheckpointVersion = 1;

void write_hex(std::ostream& out, std::span<const double> values) {
  char buf[64];
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto res = std::to_chars(buf, buf + sizeof(buf), values[i], std::chars_format::hex);
    if (i > 0) out << ' ';
    out.write(buf, res.ptr - buf);
  }
  out << '\n';
}

void read_hex(std::istream& in, std::span<double> values) {
  std::string word;
  for (double& v : values) {
    if (!(in >> word)) throw DataError("checkpoint truncated");
    const char* first = word.data();
    const char* last = word.data() + word.size();
    bool negative = false;
    if (first != last && *first == '-') {
      negative = true;
      ++first;
    }
    const auto [ptr, ec] = std::from_chars(first, last, v, std::chars_format::hex);
    if (ec != std::errc() || ptr != last) throw DataError("checkpoint: bad value '" + word + "'");
    if (negative) v = -v;
  }
}

void expect_word(std::istream& in, std::string_view expected) {
  std::string word;
  if (!(in >> word) || word != expected) {
    throw DataError("checkpoint: expected '" + std::string(expected) + "', found '" + word + "'");
  }
}

std::size_t read_field(std::istream& in, std::string_view name) {
  expect_word(in, name);
  std::size_t v = 0;
  if (!(in >> v)) throw DataError("checkpoint: bad value for " + std::string(name));
  return v;
}

}  // namespace

void EmbeddingClassifier::save(std::ostream& out) const {
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  out << "vocab_size " << vocab_size() << '\n';
  out << "dim " << dim() << '\n';
  out << "classes " << num_classes() << '\n';
  out << "embedding\n";
  for (std::size_t v = 0; v < vocab_size(); ++v) write_hex(out, embeddings_.row(v));
  out << "weights\n";
  for (std::size_t j = 0; j < dim(); ++j) write_hex(out, weights_.row(j));
  out << "bias\n";
  write_hex(out, bias_);
}

EmbeddingClassifier EmbeddingClassifier::load(std::istream& in) {
  expect_word(in, kCheckpointMagic);
  int version = 0;
  if (!(in >> version) || version != kCheckpointVersion) {
    throw DataError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto vocab = read_field(in, "vocab_size");
  const auto dim = read_field(in, "dim");
  const auto classes = read_field(in, "classes");
  EmbeddingClassifier model(vocab, dim, classes);
  expect_word(in, "embedding");
  read_hex(in, model.embeddings_.data());
  expect_word(in, "weights");
  read_hex(in, model.weights_.data());
  expect_word(in, "bias");
  read_hex(in, model.bias_);
  for (double x : model.embeddings_.row(static_cast<std::size_t>(Vocabulary::kPadId))) {
    if (x != 0.0) throw DataError("checkpoint: pad embedding row must be zero");
  }
  return model;
}

EmbeddingClassifier train(std::span<const Document> documents, std::size_t vocab_size,
                          std::size_t num_classes, const TrainOptions& options,
                          TrainReport* report) {
  std::set<ClassId> classes;
  for (const auto& d : documents) {
    if (d.label < 0 || static_cast<std::size_t>(d.label) >= num_classes) {
      throw TrainingError("label " + std::to_string(d.label) + " outside [0, " +
                          std::to_string(num_classes) + ")");
    }
    classes.insert(d.label);
  }
  if (classes.size() < 2) throw TrainingError("training data must contain at least two classes");

  auto model = EmbeddingClassifier::random_init(vocab_size, options.dim, num_classes,
                                                options.init_scale, derive_seed(options.seed, {1}));
  Rng order_rng(derive_seed(options.seed, {2}));
  std::vector<std::size_t> order(documents.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainReport local;
  const double lr = options.learning_rate;
  std::vector<double> grad_h(options.dim);
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    order_rng.shuffle(std::span(order));
    double loss = 0.0;
    for (std::size_t idx : order) {
      const auto& doc = documents[idx];
      const auto h = model.pooled(doc.token_ids, {});
      const auto z = model.logits(doc.token_ids, {});
      for (double v : z) {
        if (!std::isfinite(v)) {
          throw TrainingError("non-finite training loss at epoch " + std::to_string(epoch));
        }
      }
      const auto p = ProbabilityVector::from_logits(z);
      loss -= std::log(std::max(p[static_cast<std::size_t>(doc.label)], 1e-300));

      std::vector<double> g(p.values().begin(), p.values().end());
      g[static_cast<std::size_t>(doc.label)] -= 1.0;
      for (std::size_t j = 0; j < options.dim; ++j) {
        const auto w = model.weights().row(j);
        double acc = 0.0;
        for (std::size_t k = 0; k < num_classes; ++k) acc += w[k] * g[k];
        grad_h[j] = acc;
      }
      for (std::size_t j = 0; j < options.dim; ++j) {
        auto w = model.weights().row(j);
        for (std::size_t k = 0; k < num_classes; ++k) w[k] -= lr * h[j] * g[k];
      }
      for (std::size_t k = 0; k < num_classes; ++k) model.bias()[k] -= lr * g[k];

      std::size_t count = 0;
      for (TokenId id : doc.token_ids) count += id != Vocabulary::kPadId;
      if (count == 0) continue;
      const double share = lr / static_cast<double>(count);
      for (TokenId id : doc.token_ids) {
        if (id == Vocabulary::kPadId) continue;
        auto e = model.embeddings().row(static_cast<std::size_t>(id));
        for (std::size_t j = 0; j < options.dim; ++j) e[j] -= share * grad_h[j];
      }
    }
    loss /= static_cast<double>(std::max<std::size_t>(documents.size(), 1));
    if (!std::isfinite(loss)) {
      throw TrainingError("non-finite training loss at epoch " + std::to_string(epoch));
    }
    local.epoch_loss.push_back(loss);
  }
  local.train_accuracy = accuracy(model, documents);
  if (report != nullptr) *report = std::move(local);
  return model;
}

double accuracy(const ProbabilitySource& model, std::span<const Document> documents) {
  if (documents.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& d : documents) correct += model.predict(d.token_ids).argmax() == d.label;
  return static_cast<double>(correct) / static_cast<double>(documents.size());
}

PerturbedModel::PerturbedModel(const EmbeddingClassifier& base, double sigma2_input,
                               std::uint64_t seed)
    : model_(base), sigma2_(sigma2_input), seed_(seed) {
  if (!(sigma2_input >= 0.0) || !std::isfinite(sigma2_input)) {
    throw std::invalid_argument("input noise variance must be non-negative");
  }
  if (sigma2_input == 0.0) return;
  const double stddev = std::sqrt(sigma2_input);
  Rng rng(seed);
  auto& table = model_.embeddings();
  for (std::size_t v = 0; v < table.rows(); ++v) {
    if (v == static_cast<std::size_t>(Vocabulary::kPadId)) continue;
    for (double& x : table.row(v)) x += rng.normal(0.0, stddev);
  }
}

PerturbedModel perturb_model(const EmbeddingClassifier& model, double sigma2_input,
                             std::uint64_t seed) {
  return PerturbedModel(model, sigma2_input, seed);
}

}  // namespace expstab
