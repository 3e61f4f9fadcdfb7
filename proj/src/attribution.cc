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

#include "expstab/attribution.h"

#include <algorithm>
#include <bit>
#include <limits>
#include <cmath>
#include <numeric>

#include "expstab/linalg.h"
#include "expstab/random.h"

namespace expstab {

std::string_view explainer_name(ExplainerKind kind) {
  switch (kind) {
    case ExplainerKind::kLime:
      return "lime";
    case ExplainerKind::kKernelShap:
      return "kernel_shap";
    case ExplainerKind::kSampleShapley:
      return "sample_shapley";
  }
  return "unknown";
}

ExplainerKind parse_explainer(std::string_view name) {
  if (name == "lime") return ExplainerKind::kLime;
  if (name == "kernel_shap") return ExplainerKind::kKernelShap;
  if (name == "sample_shapley") return ExplainerKind::kSampleShapley;
  throw std::invalid_argument("unknown explainer '" + std::string(name) +
                              "' (expected lime, kernel_shap or sample_shapley)");
}

MaskMatrix::MaskMatrix(std::vector<std::uint8_t> bits, std::size_t rows, std::size_t cols,
                       bool includes_full_mask)
    : bits_(std::move(bits)), rows_(rows), cols_(cols), includes_full_mask_(includes_full_mask) {
  if (rows < 2) throw std::invalid_argument("mask matrix needs at least 2 rows");
  if (cols == 0) throw std::invalid_argument("mask matrix needs at least 1 column");
  if (bits_.size() != rows * cols) throw std::invalid_argument("mask matrix: size mismatch");
  ones_.resize(rows);
  for (std::size_t j = 0; j < rows; ++j) {
    std::size_t n = 0;
    for (std::uint8_t b : row(j)) {
      if (b > 1) throw std::invalid_argument("mask entries must be 0 or 1");
      n += b;
    }
    if (n == 0) throw std::invalid_argument("mask row " + std::to_string(j) + " is empty");
    ones_[j] = n;
  }
}

MaskMatrix generate_masks(std::size_t tokens, std::size_t samples, std::uint64_t seed,
                          bool prepend_full) {
  if (tokens == 0) throw std::invalid_argument("generate_masks: need at least one token");
  if (samples < 2) throw std::invalid_argument("generate_masks: need at least two samples");
  std::vector<std::uint8_t> bits(tokens * samples, 1);
  if (tokens == 1) return MaskMatrix(std::move(bits), samples, tokens, prepend_full);

  Rng rng(seed);
  for (std::size_t j = prepend_full ? 1 : 0; j < samples; ++j) {
    auto* row = bits.data() + j * tokens;
    std::size_t ones = 0;
    do {
      ones = 0;
      for (std::size_t i = 0; i < tokens; ++i) {
        row[i] = rng.bernoulli_half() ? 1 : 0;
        ones += row[i];
      }
    } while (ones == 0 || ones == tokens);
  }
  return MaskMatrix(std::move(bits), samples, tokens, prepend_full);
}

MaskMatrix enumerate_masks(std::size_t tokens) {
  if (tokens == 0 || tokens > 20) throw std::invalid_argument("enumerate_masks: 1 <= l <= 20");
  const std::size_t full = (std::size_t{1} << tokens) - 1;
  std::vector<std::uint8_t> bits;
  bits.reserve(full * tokens);
  auto append = [&](std::size_t coalition) {
    for (std::size_t i = 0; i < tokens; ++i) bits.push_back((coalition >> i) & 1U);
  };
  append(full);
  for (std::size_t c = 1; c < full; ++c) append(c);
  if (full == 1) append(full);  // l = 1: the single mask, twice, keeps m >= 2.
  return MaskMatrix(std::move(bits), bits.size() / tokens, tokens, true);
}

KernelWeights::KernelWeights(std::vector<double> weights) : weights_(std::move(weights)) {
  for (double w : weights_) {
    if (!(w > 0.0) || !std::isfinite(w)) {
      throw std::invalid_argument("kernel weights must be positive and finite");
    }
  }
}

KernelWeights lime_weights(const MaskMatrix& masks) {
  std::vector<double> w(masks.rows());
  const auto l = static_cast<double>(masks.cols());
  for (std::size_t j = 0; j < masks.rows(); ++j) {
    w[j] = std::sqrt(static_cast<double>(masks.ones(j)) / l);
  }
  return KernelWeights(std::move(w));
}

double shapley_kernel_weight(std::size_t tokens, std::size_t ones) {
  if (ones == 0 || ones > tokens) throw std::invalid_argument("shapley_kernel_weight: bad size");
  if (ones == tokens) return kShapleyFullMaskWeight;
  const std::size_t k = std::min(ones, tokens - ones);
  double binom = 1.0;
  for (std::size_t i = 1; i <= k; ++i) {
    binom = binom * static_cast<double>(tokens - k + i) / static_cast<double>(i);
  }
  return static_cast<double>(tokens - 1) /
         (binom * static_cast<double>(ones) * static_cast<double>(tokens - ones));
}

KernelWeights shapley_kernel_weights(const MaskMatrix& masks) {
  std::vector<double> w(masks.rows());
  for (std::size_t j = 0; j < masks.rows(); ++j) {
    w[j] = shapley_kernel_weight(masks.cols(), masks.ones(j));
  }
  return KernelWeights(std::move(w));
}

WlsSolution weighted_least_squares(const MaskMatrix& masks, std::span<const double> targets,
                                   const KernelWeights& weights, bool fit_intercept,
                                   double ridge) {
  const std::size_t m = masks.rows();
  const std::size_t l = masks.cols();
  if (targets.size() != m || weights.size() != m) {
    throw std::invalid_argument("weighted_least_squares: targets/weights length must equal rows");
  }
  for (double y : targets) {
    if (!std::isfinite(y)) throw std::invalid_argument("weighted_least_squares: non-finite target");
  }
  const std::size_t n = l + (fit_intercept ? 1 : 0);
  Matrix normal(n, n);
  std::vector<double> rhs(n, 0.0);
  std::vector<double> x(n);
  for (std::size_t j = 0; j < m; ++j) {
    const auto row = masks.row(j);
    for (std::size_t i = 0; i < l; ++i) x[i] = row[i];
    if (fit_intercept) x[l] = 1.0;
    const double w = weights[j];
    for (std::size_t a = 0; a < n; ++a) {
      if (x[a] == 0.0) continue;
      const double wa = w * x[a];
      rhs[a] += wa * targets[j];
      for (std::size_t b = a; b < n; ++b) normal(a, b) += wa * x[b];
    }
  }
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < a; ++b) normal(a, b) = normal(b, a);
  }
  for (std::size_t i = 0; i < l; ++i) normal(i, i) += ridge;

  auto solution = cholesky_solve(normal, rhs);
  const bool finite = solution && std::all_of(solution->begin(), solution->end(),
                                              [](double v) { return std::isfinite(v); });
  if (!finite) {
    double kappa = std::numeric_limits<double>::infinity();
    try {
      const auto eig = jacobi_eigenvalues(normal);
      if (eig.values.front() > 0.0) kappa = eig.values.back() / eig.values.front();
    } catch (const std::runtime_error&) {
    }
    throw SolveError("weighted least squares failed: normal matrix is not positive definite "
                     "(condition estimate " + std::to_string(kappa) + ")",
                     kappa);
  }
  WlsSolution out;
  out.coefficients.assign(solution->begin(), solution->begin() + static_cast<std::ptrdiff_t>(l));
  if (fit_intercept) out.intercept = (*solution)[l];
  return out;
}

std::vector<std::size_t> rank_positions(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

CoalitionValue model_value(const ProbabilitySource& model, std::span<const TokenId> tokens,
                           ClassId target) {
  if (target < 0 || static_cast<std::size_t>(target) >= model.num_classes()) {
    throw std::invalid_argument("target class " + std::to_string(target) + " outside [0, " +
                                std::to_string(model.num_classes()) + ")");
  }
  if (tokens.empty()) throw std::invalid_argument("cannot explain an empty document");
  return [&model, tokens, target](Mask mask, std::uint64_t query_index) {
    return model.predict(tokens, mask, query_index)[static_cast<std::size_t>(target)];
  };
}

namespace {

std::vector<double> evaluate_rows(const MaskMatrix& masks, const CoalitionValue& value) {
  std::vector<double> y(masks.rows());
  for (std::size_t j = 0; j < masks.rows(); ++j) y[j] = value(masks.row(j), j);
  return y;
}

double empty_value(std::size_t tokens, const CoalitionValue& value, std::uint64_t query_index) {
  const std::vector<std::uint8_t> none(tokens, 0);
  return value(none, query_index);
}

Explanation finish(ExplainerKind kind, std::vector<double> scores, double base,
                   std::uint64_t seed, std::size_t samples) {
  for (double s : scores) {
    if (!std::isfinite(s)) throw SolveError("explanation produced non-finite scores", 0.0);
  }
  Explanation e;
  e.explainer = kind;
  e.ranking = rank_positions(scores);
  e.scores = std::move(scores);
  e.base_value = base;
  e.seed = seed;
  e.samples = samples;
  return e;
}

}  // namespace

Explanation lime(std::size_t tokens, const CoalitionValue& value, const LimeOptions& options) {
  const auto masks = generate_masks(tokens, options.samples, options.seed);
  auto y = evaluate_rows(masks, value);
  const auto weights = lime_weights(masks);
  if (tokens == 1) {
    // Every nonempty mask is the full one, so the intercept is not identifiable
    // from the samples; anchor it at the empty-coalition value instead.
    const double base = empty_value(tokens, value, masks.rows());
    for (double& v : y) v -= base;
    auto fit = weighted_least_squares(masks, y, weights, false);
    return finish(ExplainerKind::kLime, std::move(fit.coefficients), base, options.seed,
                  options.samples);
  }
  auto fit = weighted_least_squares(masks, y, weights, true);
  return finish(ExplainerKind::kLime, std::move(fit.coefficients), fit.intercept, options.seed,
                options.samples);
}

Explanation kernel_shap(std::size_t tokens, const CoalitionValue& value,
                        const KernelShapOptions& options) {
  const auto masks = options.exhaustive ? enumerate_masks(tokens)
                                        : generate_masks(tokens, options.samples, options.seed);
  auto y = evaluate_rows(masks, value);
  const double base = empty_value(tokens, value, masks.rows());
  for (double& v : y) v -= base;
  auto fit = weighted_least_squares(masks, y, shapley_kernel_weights(masks), false);
  return finish(ExplainerKind::kKernelShap, std::move(fit.coefficients), base, options.seed,
                masks.rows());
}

Explanation sample_shapley(std::size_t tokens, const CoalitionValue& value,
                           const SampleShapleyOptions& options) {
  if (tokens == 0) throw std::invalid_argument("sample_shapley: need at least one token");
  if (!options.exhaustive && options.permutations == 0) {
    throw std::invalid_argument("sample_shapley: need at least one permutation");
  }
  if (options.exhaustive && tokens > 10) {
    throw std::invalid_argument("sample_shapley: exhaustive enumeration limited to 10 tokens");
  }
  std::vector<double> sums(tokens, 0.0);
  std::vector<std::size_t> order(tokens);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::uint8_t> mask(tokens);
  std::uint64_t query = 0;
  double base = 0.0;
  std::size_t walked = 0;

  auto walk = [&] {
    std::fill(mask.begin(), mask.end(), 0);
    double previous = value(mask, query++);
    if (walked == 0) base = previous;
    for (std::size_t pos : order) {
      mask[pos] = 1;
      const double current = value(mask, query++);
      sums[pos] += current - previous;
      previous = current;
    }
    ++walked;
  };

  if (options.exhaustive) {
    do {
      walk();
    } while (std::next_permutation(order.begin(), order.end()));
  } else {
    Rng rng(options.seed);
    for (std::size_t p = 0; p < options.permutations; ++p) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      rng.shuffle(std::span(order));
      walk();
    }
  }
  for (double& s : sums) s /= static_cast<double>(walked);
  return finish(ExplainerKind::kSampleShapley, std::move(sums), base, options.seed, walked);
}

std::vector<double> exact_shapley(std::size_t tokens, const CoalitionValue& value) {
  if (tokens == 0) throw std::invalid_argument("exact_shapley: need at least one token");
  if (tokens > kMaxExactShapleyTokens) {
    throw std::invalid_argument("exact_shapley: " + std::to_string(tokens) +
                                " tokens need 2^l model calls; use kernel_shap or "
                                "sample_shapley for documents longer than " +
                                std::to_string(kMaxExactShapleyTokens));
  }
  const std::size_t count = std::size_t{1} << tokens;
  std::vector<double> v(count);
  std::vector<std::uint8_t> mask(tokens);
  for (std::size_t c = 0; c < count; ++c) {
    for (std::size_t i = 0; i < tokens; ++i) mask[i] = (c >> i) & 1U;
    v[c] = value(mask, c);
  }
  // Weight of a coalition of size s not containing i: s! (l - s - 1)! / l!.
  std::vector<double> weight(tokens);
  for (std::size_t s = 0; s < tokens; ++s) {
    double binom = 1.0;  // C(l - 1, s)
    for (std::size_t i = 1; i <= s; ++i) {
      binom = binom * static_cast<double>(tokens - 1 - s + i) / static_cast<double>(i);
    }
    weight[s] = 1.0 / (static_cast<double>(tokens) * binom);
  }
  std::vector<double> phi(tokens, 0.0);
  for (std::size_t c = 0; c < count; ++c) {
    const auto s = static_cast<std::size_t>(std::popcount(c));
    for (std::size_t i = 0; i < tokens; ++i) {
      if ((c >> i) & 1U) continue;
      phi[i] += weight[s] * (v[c | (std::size_t{1} << i)] - v[c]);
    }
  }
  return phi;
}

Explanation explain_lime(const ProbabilitySource& model, const Document& doc, ClassId target,
                         const LimeOptions& options) {
  auto e = lime(doc.size(), model_value(model, doc.token_ids, target), options);
  e.target = target;
  return e;
}

Explanation explain_kernel_shap(const ProbabilitySource& model, const Document& doc,
                                ClassId target, const KernelShapOptions& options) {
  auto e = kernel_shap(doc.size(), model_value(model, doc.token_ids, target), options);
  e.target = target;
  return e;
}

Explanation explain_sample_shapley(const ProbabilitySource& model, const Document& doc,
                                   ClassId target, const SampleShapleyOptions& options) {
  auto e = sample_shapley(doc.size(), model_value(model, doc.token_ids, target), options);
  e.target = target;
  return e;
}

std::vector<double> exact_shapley(const ProbabilitySource& model, const Document& doc,
                                  ClassId target) {
  return exact_shapley(doc.size(), model_value(model, doc.token_ids, target));
}

Explanation explain(ExplainerKind kind, const ProbabilitySource& model,
                    std::span<const TokenId> tokens, ClassId target,
                    const ExplainerSettings& settings, std::uint64_t seed) {
  const auto value = model_value(model, tokens, target);
  Explanation e;
  switch (kind) {
    case ExplainerKind::kLime:
      e = lime(tokens.size(), value, LimeOptions{settings.samples, seed});
      break;
    case ExplainerKind::kKernelShap:
      e = kernel_shap(tokens.size(), value, KernelShapOptions{settings.samples, seed, false});
      break;
    case ExplainerKind::kSampleShapley:
      e = sample_shapley(tokens.size(), value,
                         SampleShapleyOptions{settings.permutations, seed, false});
      break;
  }
  e.target = target;
  return e;
}

}  // namespace expstab
