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

// expstab command line: train, explain, compare, conditioning, version.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "expstab/attribution.h"
#include "expstab/blackbox.h"
#include "expstab/conditioning.h"
#include "expstab/corpus.h"
#include "expstab/harness.h"

namespace fs = std::filesystem;
using namespace expstab;

namespace {

constexpr int kUsageError = 2;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
};

ExperimentConfig load_config(const Common& common) {
  auto config = ExperimentConfig::load(common.config_path);
  if (common.seed) config.seed = *common.seed;
  if (!common.out.empty()) config.output_dir = common.out;
  return config;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

int run_train(const Common& common) {
  const auto config = load_config(common);
  const auto data = prepare_data(config);
  TrainReport report;
  const auto model = train_model(config, data, &report);
  const fs::path dir = config.output_dir;
  fs::create_directories(dir);
  {
    auto out = open_output(dir / "model.txt");
    model.save(out);
  }
  {
    auto out = open_output(dir / "vocab.tsv");
    data.vocab.write_tsv(out);
  }
  std::printf("vocabulary %zu, train docs %zu, eval docs %zu\n", data.vocab.size(),
              data.train.size(), data.eval.size());
  std::printf("train accuracy %.4f, eval accuracy %.4f\n", report.train_accuracy,
              accuracy(model, data.eval));
  std::printf("wrote %s and %s\n", (dir / "model.txt").c_str(), (dir / "vocab.tsv").c_str());
  return 0;
}

struct ExplainArgs {
  std::string method = "lime";
  std::string text;
  std::string model_dir;
  std::size_t samples = kDefaultSamples;
  std::size_t permutations = 10;
  std::optional<int> target;
  bool json = false;
};

int run_explain(const Common& common, const ExplainArgs& args) {
  const auto kind = parse_explainer(args.method);
  std::optional<Vocabulary> vocab;
  std::optional<EmbeddingClassifier> model;
  std::size_t max_length = 50;
  if (!args.model_dir.empty()) {
    std::ifstream model_in(fs::path(args.model_dir) / "model.txt");
    std::ifstream vocab_in(fs::path(args.model_dir) / "vocab.tsv");
    if (!model_in || !vocab_in) {
      throw std::runtime_error("expected model.txt and vocab.tsv in " + args.model_dir);
    }
    model = EmbeddingClassifier::load(model_in);
    vocab = Vocabulary::read_tsv(vocab_in);
    if (vocab->size() != model->vocab_size()) {
      throw std::runtime_error("vocabulary and model sizes disagree");
    }
  } else {
    ExperimentConfig config;
    if (!common.config_path.empty()) {
      config = load_config(common);
    } else {
      config.synthetic = SyntheticConfig{};
    }
    const auto data = prepare_data(config);
    model = train_model(config, data);
    vocab = data.vocab;
    max_length = config.max_length;
  }

  const auto doc = encode(RawExample{0, args.text}, *vocab, max_length);
  const auto probs = model->predict(doc.token_ids);
  const ClassId target = args.target ? *args.target : probs.argmax();
  const std::uint64_t seed = common.seed.value_or(0);
  const auto e = explain(kind, *model, doc.token_ids, target,
                         ExplainerSettings{args.samples, args.permutations}, seed);
  if (args.json) {
    std::cout << explanation_to_json(e, "cli").dump() << '\n';
    return 0;
  }
  std::printf("explainer %s, target class %d (p = %.4f)%s\n", std::string(explainer_name(kind)).c_str(),
              target, probs[static_cast<std::size_t>(target)],
              doc.all_unknown ? ", warning: every token is out of vocabulary" : "");
  for (std::size_t r = 0; r < e.ranking.size(); ++r) {
    const std::size_t pos = e.ranking[r];
    std::printf("%3zu  %-20s  pos %-3zu  %+.6f\n", r + 1, doc.tokens[pos].c_str(), pos, e.scores[pos]);
  }
  return 0;
}

int run_compare(const Common& common, std::optional<std::size_t> threads) {
  auto config = load_config(common);
  if (threads) config.threads = *threads;
  const auto table = run_comparison(config);
  emit_results(table, config, config.output_dir);
  std::printf("records %zu (attempted %zu, skipped undefined tau %zu, short docs %zu)\n",
              table.records.size(), table.attempted, table.skipped_undefined_tau,
              table.flagged_short);
  std::printf("train accuracy %.4f, eval accuracy %.4f\n", table.train_accuracy, table.eval_accuracy);
  std::printf("%-15s %-6s %5s %12s %12s\n", "explainer", "source", "level", "tau", "overlap");
  for (std::size_t i = 0; i + 1 < table.summaries.size(); i += 2) {
    const auto& tau = table.summaries[i];
    const auto& overlap = table.summaries[i + 1];
    std::printf("%-15s %-6s %5d %12.4f %12.4f\n", std::string(explainer_name(tau.explainer)).c_str(),
                std::string(source_name(tau.source)).c_str(), tau.level, tau.mean, overlap.mean);
  }
  std::printf("wrote %s/{records.csv,summary.csv,config.json}\n", config.output_dir.c_str());
  return 0;
}

struct ConditioningArgs {
  std::string lengths = "20,30,40";
  std::size_t iterations = 500;
  std::size_t samples = 200;
  std::string kernel = "cosine_distance";
  std::size_t threads = 0;
};

std::vector<std::size_t> parse_lengths(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(static_cast<std::size_t>(std::stoul(item)));
  }
  if (out.empty()) throw CLI::ValidationError("--lengths", "expected a comma-separated list");
  return out;
}

int run_conditioning(const Common& common, const ConditioningArgs& args) {
  SimulationOptions options;
  options.lengths = parse_lengths(args.lengths);
  options.iterations = args.iterations;
  options.samples = args.samples;
  options.kernel = parse_kernel(args.kernel);
  options.threads = args.threads;
  if (common.seed) options.seed = *common.seed;
  const auto report = run_simulation(options);
  const fs::path dir = common.out.empty() ? fs::path("results") : fs::path(common.out);
  fs::create_directories(dir);
  {
    auto out = open_output(dir / "kappa.csv");
    write_kappa_csv(out, report);
  }
  {
    auto out = open_output(dir / "kappa_bins.csv");
    write_kappa_bins_csv(out, report);
  }
  std::printf("%-6s %10s %10s %10s %12s\n", "length", "mean", "max", "<30", "kernel");
  for (std::size_t i = 0; i < options.lengths.size(); ++i) {
    std::printf("%-6zu %10.4f %10.4f %10.3f %12s\n", options.lengths[i], report.mean(i),
                report.max(i), report.fraction_below(i, kWellConditionedThreshold),
                args.kernel.c_str());
  }
  for (const auto& b : report.bins) {
    std::printf("  l=%zu [%g, %g): %zu\n", b.length, b.lo, b.hi, b.count);
  }
  std::printf("wrote %s and %s\n", (dir / "kappa.csv").c_str(), (dir / "kappa_bins.csv").c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Explanation stability laboratory"};
  app.require_subcommand(1);
  Common common;

  auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* opt = sub->add_option("--config", common.config_path, "JSON experiment config");
    if (config_required) opt->required();
    sub->add_option("--seed", common.seed, "Seed override");
    sub->add_option("--out", common.out, "Output directory override");
  };

  auto* train_cmd = app.add_subcommand("train", "Train the built-in classifier");
  add_common(train_cmd, true);

  ExplainArgs explain_args;
  auto* explain_cmd = app.add_subcommand("explain", "Explain one piece of text");
  add_common(explain_cmd, false);
  explain_cmd->add_option("--method", explain_args.method, "lime, kernel_shap or sample_shapley")
      ->check(CLI::IsMember({"lime", "kernel_shap", "sample_shapley"}));
  explain_cmd->add_option("--text", explain_args.text, "Text to explain")->required();
  explain_cmd->add_option("--model", explain_args.model_dir, "Directory written by `train` (default: built-in synthetic model)");
  explain_cmd->add_option("--samples", explain_args.samples, "Pseudo examples (LIME, Kernel Shapley)");
  explain_cmd->add_option("--permutations", explain_args.permutations, "Permutations (Sample Shapley)");
  explain_cmd->add_option("--target", explain_args.target, "Class to explain (default: predicted)");
  explain_cmd->add_flag("--json", explain_args.json, "Print the explanation as a JSON record");

  std::optional<std::size_t> compare_threads;
  auto* compare_cmd = app.add_subcommand("compare", "Run the perturbation comparison experiment");
  add_common(compare_cmd, true);
  compare_cmd->add_option("--threads", compare_threads, "Worker threads (0 = all cores)");

  ConditioningArgs cond_args;
  auto* cond_cmd = app.add_subcommand("conditioning", "Kernel-matrix condition number simulation");
  add_common(cond_cmd, false);
  cond_cmd->add_option("--lengths", cond_args.lengths, "Comma-separated sentence lengths");
  cond_cmd->add_option("--iters", cond_args.iterations, "Draws per length");
  cond_cmd->add_option("--m", cond_args.samples, "Pseudo examples per matrix");
  cond_cmd->add_option("--kernel", cond_args.kernel, "cosine_distance or cosine_similarity")
      ->check(CLI::IsMember({"cosine_distance", "cosine_similarity"}));
  cond_cmd->add_option("--threads", cond_args.threads, "Worker threads (0 = all cores)");

  std::string synth_out;
  std::size_t synth_n = 600;
  std::uint64_t synth_seed = 7;
  auto* synth_cmd = app.add_subcommand("synth-corpus", "Write the synthetic sentiment corpus as TSV");
  synth_cmd->add_option("--out", synth_out, "Output TSV path")->required();
  synth_cmd->add_option("--n", synth_n, "Number of examples");
  synth_cmd->add_option("--seed", synth_seed, "Generator seed");

  auto* version_cmd = app.add_subcommand("version", "Print the version");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kUsageError;
  }

  try {
    if (*train_cmd) return run_train(common);
    if (*explain_cmd) return run_explain(common, explain_args);
    if (*compare_cmd) return run_compare(common, compare_threads);
    if (*cond_cmd) return run_conditioning(common, cond_args);
    if (*synth_cmd) {
      auto out = open_output(synth_out);
      write_dataset(out, synthetic_sentiment_corpus(SyntheticCorpusOptions{synth_n, synth_seed}));
      std::printf("wrote %zu examples to %s\n", synth_n, synth_out.c_str());
      return 0;
    }
    if (*version_cmd) {
      std::printf("expstab %s\n", std::string(kVersion).c_str());
      return 0;
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
