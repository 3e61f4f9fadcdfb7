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

// Comparison experiment: baseline explanations against their input-perturbed
// and output-perturbed counterparts, with paired masks, across perturbation
// levels and explainers.

#ifndef EXPSTAB_HARNESS_H_
#define EXPSTAB_HARNESS_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "expstab/attribution.h"
#include "expstab/blackbox.h"
#include "expstab/corpus.h"
#include "expstab/metrics.h"
#include "expstab/perturbation.h"
#include "json.hpp"

namespace expstab {

inline constexpr std::string_view kVersion = "0.1.0";

struct ModelConfig {
  std::size_t dim = 64;
  std::size_t epochs = 20;
  double learning_rate = 0.5;
  double init_scale = 0.1;
};

struct SyntheticConfig {
  std::size_t num_examples = 600;
  std::uint64_t seed = 7;
};

// JSON schema: see README.md. Unknown keys are rejected.
struct ExperimentConfig {
  // TSV dataset; ignored when `synthetic` is set.
  std::string dataset;
  std::optional<SyntheticConfig> synthetic;
  std::optional<int> num_classes;
  std::size_t max_length = 50;
  std::size_t vocab_threshold = 0;
  std::size_t train_limit = 2000;
  std::size_t eval_doc_count = 50;
  ModelConfig model;
  std::vector<ExplainerKind> explainers = {ExplainerKind::kLime, ExplainerKind::kKernelShap,
                                           ExplainerKind::kSampleShapley};
  std::size_t samples = kDefaultSamples;
  std::size_t permutations = 10;
  std::vector<int> levels = {0, 1, 2, 3, 4};
  // Replicate seeds; each drives its own masks and noise.
  std::vector<std::uint64_t> seeds = {1};
  // Experiment seed: data split and model training.
  std::uint64_t seed = 2023;
  std::size_t k = kDefaultTopK;
  OutputNoiseMode output_noise = OutputNoiseMode::kPerQuery;
  // 0 picks the hardware concurrency. Results do not depend on it.
  std::size_t threads = 0;
  std::string output_dir = "results";

  void validate() const;
  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
};

struct PreparedData {
  Vocabulary vocab;
  std::size_t num_classes = 0;
  std::vector<Document> train;
  std::vector<Document> eval;
  std::vector<std::string> eval_ids;
  // Held-out examples that could not be encoded or have fewer than 2 tokens.
  std::size_t eval_rejected = 0;
};

PreparedData prepare_data(const ExperimentConfig& config);

EmbeddingClassifier train_model(const ExperimentConfig& config, const PreparedData& data,
                                TrainReport* report = nullptr);

struct LevelAccuracy {
  PerturbationSource source = PerturbationSource::kInput;
  int level = 0;
  double sigma2 = 0.0;
  double accuracy = 0.0;
};

struct ResultsTable {
  std::vector<DiscrepancyRecord> records;
  std::vector<MetricSummary> summaries;
  // Comparisons dropped because a score vector was constant.
  std::size_t skipped_undefined_tau = 0;
  // Emitted records whose document was shorter than k.
  std::size_t flagged_short = 0;
  // Comparisons attempted: docs x explainers x sources x levels x seeds.
  std::size_t attempted = 0;
  std::size_t flipped = 0;
  double train_accuracy = 0.0;
  double eval_accuracy = 0.0;
  std::vector<LevelAccuracy> level_accuracy;
  std::string config_hash;
  std::string code_version = std::string(kVersion);
};

// Runs every comparison on an already trained model.
ResultsTable compare(const ExperimentConfig& config, const PreparedData& data,
                     const EmbeddingClassifier& model);

// prepare_data, train_model and compare.
ResultsTable run_comparison(const ExperimentConfig& config);

// records.csv, summary.csv and config.json inside `dir` (created if needed).
void emit_results(const ResultsTable& table, const ExperimentConfig& config,
                  const std::filesystem::path& dir);

void write_records_csv(std::ostream& out, const std::vector<DiscrepancyRecord>& records);
void write_summary_csv(std::ostream& out, const std::vector<MetricSummary>& summaries);
std::vector<DiscrepancyRecord> read_records_csv(std::istream& in);

// {doc_id, explainer, target, scores, ranking, seed, m}
nlohmann::json explanation_to_json(const Explanation& e, std::string_view doc_id);

// 16 hex digits, FNV-1a over the canonical JSON dump.
std::string config_hash(const ExperimentConfig& config);

}  // namespace expstab

#endif  // EXPSTAB_HARNESS_H_
