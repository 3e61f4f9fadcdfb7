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

#include "expstab/harness.h"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <iostream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "expstab/csv.h"
#include "expstab/random.h"

namespace expstab {

using nlohmann::json;

namespace {

// Top-level branches of the seed hierarchy.
enum SeedTag : std::uint64_t {
  kSplitTag = 1,
  kModelTag = 2,
  kMaskTag = 3,
  kInputNoiseTag = 4,
  kOutputNoiseTag = 5,
};

template <typename T>
T take(json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  T v = j.at(key).get<T>();
  j.erase(key);
  return v;
}

void reject_unknown(const json& rest, std::string_view where) {
  if (!rest.empty()) {
    throw std::invalid_argument("unknown key '" + rest.begin().key() + "' in " + std::string(where));
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  if (dataset.empty() && !synthetic) {
    throw std::invalid_argument("config: set either 'dataset' or 'synthetic'");
  }
  if (explainers.empty()) throw std::invalid_argument("config: 'explainers' must be nonempty");
  if (levels.empty()) throw std::invalid_argument("config: 'levels' must be nonempty");
  if (seeds.empty()) throw std::invalid_argument("config: 'seeds' must be nonempty");
  if (samples < 2) throw std::invalid_argument("config: 'samples' must be at least 2");
  if (permutations < 1) throw std::invalid_argument("config: 'permutations' must be at least 1");
  if (k < 1) throw std::invalid_argument("config: 'k' must be at least 1");
  if (max_length < 1) throw std::invalid_argument("config: 'max_length' must be at least 1");
  if (eval_doc_count < 1) throw std::invalid_argument("config: 'eval_doc_count' must be at least 1");
  if (num_classes && *num_classes < 2) throw std::invalid_argument("config: 'num_classes' < 2");
  for (int level : levels) level_to_sigma2(PerturbationSource::kInput, level);
  if (std::set<int>(levels.begin(), levels.end()).size() != levels.size()) {
    throw std::invalid_argument("config: duplicate level");
  }
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw std::invalid_argument("config: duplicate seed");
  }
  if (std::set<ExplainerKind>(explainers.begin(), explainers.end()).size() != explainers.size()) {
    throw std::invalid_argument("config: duplicate explainer");
  }
}

json ExperimentConfig::to_json() const {
  json j;
  j["dataset"] = dataset;
  if (synthetic) {
    j["synthetic"] = {{"num_examples", synthetic->num_examples}, {"seed", synthetic->seed}};
  }
  if (num_classes) j["num_classes"] = *num_classes;
  j["max_length"] = max_length;
  j["vocab_threshold"] = vocab_threshold;
  j["train_limit"] = train_limit;
  j["eval_doc_count"] = eval_doc_count;
  j["model"] = {{"dim", model.dim},
                {"epochs", model.epochs},
                {"learning_rate", model.learning_rate},
                {"init_scale", model.init_scale}};
  json names = json::array();
  for (auto e : explainers) names.push_back(std::string(explainer_name(e)));
  j["explainers"] = names;
  j["samples"] = samples;
  j["permutations"] = permutations;
  j["levels"] = levels;
  j["seeds"] = seeds;
  j["seed"] = seed;
  j["k"] = k;
  j["output_noise"] = std::string(noise_mode_name(output_noise));
  j["threads"] = threads;
  j["output_dir"] = output_dir;
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& input) {
  if (!input.is_object()) throw std::invalid_argument("config must be a JSON object");
  json j = input;
  ExperimentConfig c;
  try {
    c.dataset = take<std::string>(j, "dataset", c.dataset);
    if (j.contains("synthetic")) {
      json s = j.at("synthetic");
      SyntheticConfig sc;
      sc.num_examples = take<std::size_t>(s, "num_examples", sc.num_examples);
      sc.seed = take<std::uint64_t>(s, "seed", sc.seed);
      reject_unknown(s, "synthetic");
      c.synthetic = sc;
      j.erase("synthetic");
    }
    if (j.contains("num_classes")) c.num_classes = take<int>(j, "num_classes", 0);
    c.max_length = take<std::size_t>(j, "max_length", c.max_length);
    c.vocab_threshold = take<std::size_t>(j, "vocab_threshold", c.vocab_threshold);
    c.train_limit = take<std::size_t>(j, "train_limit", c.train_limit);
    c.eval_doc_count = take<std::size_t>(j, "eval_doc_count", c.eval_doc_count);
    if (j.contains("model")) {
      json m = j.at("model");
      c.model.dim = take<std::size_t>(m, "dim", c.model.dim);
      c.model.epochs = take<std::size_t>(m, "epochs", c.model.epochs);
      c.model.learning_rate = take<double>(m, "learning_rate", c.model.learning_rate);
      c.model.init_scale = take<double>(m, "init_scale", c.model.init_scale);
      reject_unknown(m, "model");
      j.erase("model");
    }
    if (j.contains("explainers")) {
      c.explainers.clear();
      for (const auto& name : j.at("explainers")) {
        c.explainers.push_back(parse_explainer(name.get<std::string>()));
      }
      j.erase("explainers");
    }
    c.samples = take<std::size_t>(j, "samples", c.samples);
    c.permutations = take<std::size_t>(j, "permutations", c.permutations);
    c.levels = take<std::vector<int>>(j, "levels", c.levels);
    c.seeds = take<std::vector<std::uint64_t>>(j, "seeds", c.seeds);
    c.seed = take<std::uint64_t>(j, "seed", c.seed);
    c.k = take<std::size_t>(j, "k", c.k);
    c.output_noise =
        parse_noise_mode(take<std::string>(j, "output_noise", std::string(noise_mode_name(c.output_noise))));
    c.threads = take<std::size_t>(j, "threads", c.threads);
    c.output_dir = take<std::string>(j, "output_dir", c.output_dir);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  reject_unknown(j, "config");
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
  auto config = from_json(j);
  if (!config.dataset.empty()) {
    const std::filesystem::path data(config.dataset);
    if (data.is_relative() && !std::filesystem::exists(data)) {
      const auto beside = path.parent_path() / data;
      if (std::filesystem::exists(beside)) config.dataset = beside.string();
    }
  }
  return config;
}

std::string config_hash(const ExperimentConfig& config) {
  const std::string text = config.to_json().dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

PreparedData prepare_data(const ExperimentConfig& config) {
  config.validate();
  std::vector<RawExample> examples;
  if (config.synthetic) {
    examples = synthetic_sentiment_corpus(
        SyntheticCorpusOptions{config.synthetic->num_examples, config.synthetic->seed});
  } else {
    examples = load_dataset(config.dataset, config.num_classes, &std::cerr);
  }
  if (examples.empty()) throw DataError("dataset has no examples");

  PreparedData data{Vocabulary::build(examples, 0), 0, {}, {}, {}, 0};
  ClassId max_label = 0;
  for (const auto& e : examples) max_label = std::max(max_label, e.label);
  data.num_classes = config.num_classes ? static_cast<std::size_t>(*config.num_classes)
                                        : static_cast<std::size_t>(max_label) + 1;
  if (data.num_classes < 2) throw DataError("dataset has fewer than two classes");

  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng split(derive_seed(config.seed, {kSplitTag}));
  split.shuffle(std::span(order));

  const std::size_t eval_n = std::min(config.eval_doc_count, order.size());
  const std::size_t train_n = std::min(config.train_limit, order.size() - eval_n);
  if (train_n == 0) throw DataError("no examples left for training after the evaluation split");

  std::vector<RawExample> train_raw;
  train_raw.reserve(train_n);
  for (std::size_t i = eval_n; i < eval_n + train_n; ++i) train_raw.push_back(examples[order[i]]);
  data.vocab = Vocabulary::build(train_raw, config.vocab_threshold);

  for (const auto& e : train_raw) {
    try {
      data.train.push_back(encode(e, data.vocab, config.max_length));
    } catch (const DataError&) {
    }
  }
  for (std::size_t i = 0; i < eval_n; ++i) {
    try {
      auto doc = encode(examples[order[i]], data.vocab, config.max_length);
      if (doc.size() < 2) {
        ++data.eval_rejected;
        continue;
      }
      data.eval.push_back(std::move(doc));
      data.eval_ids.push_back(std::to_string(order[i]));
    } catch (const DataError&) {
      ++data.eval_rejected;
    }
  }
  return data;
}

EmbeddingClassifier train_model(const ExperimentConfig& config, const PreparedData& data,
                                TrainReport* report) {
  TrainOptions options;
  options.epochs = config.model.epochs;
  options.learning_rate = config.model.learning_rate;
  options.dim = config.model.dim;
  options.init_scale = config.model.init_scale;
  options.seed = derive_seed(config.seed, {kModelTag});
  return train(data.train, data.vocab.size(), data.num_classes, options, report);
}

namespace {

struct DocOutcome {
  std::vector<DiscrepancyRecord> records;
  std::size_t skipped = 0;
};

std::uint64_t output_noise_seed(std::uint64_t replicate, std::size_t doc, ExplainerKind kind,
                                int level) {
  return derive_seed(replicate, {kOutputNoiseTag, doc, static_cast<std::uint64_t>(kind),
                                 static_cast<std::uint64_t>(level)});
}

}  // namespace

ResultsTable compare(const ExperimentConfig& config, const PreparedData& data,
                     const EmbeddingClassifier& model) {
  config.validate();
  const ExplainerSettings settings{config.samples, config.permutations};

  // One perturbed embedding table per (replicate seed, level), shared by all
  // documents.
  std::vector<std::vector<PerturbedModel>> input_models(config.seeds.size());
  for (std::size_t s = 0; s < config.seeds.size(); ++s) {
    for (int level : config.levels) {
      input_models[s].emplace_back(
          model, level_to_sigma2(PerturbationSource::kInput, level),
          derive_seed(config.seeds[s], {kInputNoiseTag, static_cast<std::uint64_t>(level)}));
    }
  }

  const std::size_t docs = data.eval.size();
  std::vector<DocOutcome> outcomes(docs);

  auto process = [&](std::size_t d) {
    const auto& doc = data.eval[d];
    const std::span<const TokenId> tokens = doc.token_ids;
    const ClassId predicted = model.predict(tokens).argmax();
    const std::size_t k = std::min(config.k, doc.size());
    auto& out = outcomes[d];

    for (ExplainerKind kind : config.explainers) {
      for (std::size_t s = 0; s < config.seeds.size(); ++s) {
        const std::uint64_t replicate = config.seeds[s];
        const std::uint64_t mask_seed = derive_seed(replicate, {kMaskTag, d});
        const auto baseline = explain(kind, model, tokens, predicted, settings, mask_seed);

        for (PerturbationSource source : {PerturbationSource::kInput, PerturbationSource::kOutput}) {
          for (std::size_t li = 0; li < config.levels.size(); ++li) {
            const int level = config.levels[li];
            DiscrepancyRecord r;
            r.doc_id = data.eval_ids[d];
            r.explainer = kind;
            r.source = source;
            r.level = level;
            r.sigma2 = level_to_sigma2(source, level);
            r.seed = replicate;
            r.k = k;
            r.k_reduced = k < config.k;

            Explanation counterpart;
            if (source == PerturbationSource::kInput) {
              const auto& perturbed = input_models[s][li];
              counterpart = explain(kind, perturbed, tokens, predicted, settings, mask_seed);
              r.argmax_flipped = perturbed.predict(tokens).argmax() != predicted;
            } else {
              const auto spec = PerturbationSpec::at_level(
                  source, level, output_noise_seed(replicate, d, kind, level));
              const OutputPerturbedSource wrapped(model, spec, config.output_noise);
              counterpart = explain(kind, wrapped, tokens, predicted, settings, mask_seed);
              r.argmax_flipped = wrapped.predict(tokens, {}, 0).argmax() != predicted;
            }
            try {
              r.kendall_tau = kendall_tau(baseline.scores, counterpart.scores);
            } catch (const UndefinedCorrelation&) {
              ++out.skipped;
              continue;
            }
            r.topk_overlap = topk_overlap(baseline.ranking, counterpart.ranking, k);
            out.records.push_back(std::move(r));
          }
        }
      }
    }
  };

  std::size_t threads = config.threads != 0 ? config.threads : std::thread::hardware_concurrency();
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(docs, 1));
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr failure;
  auto worker = [&] {
    for (std::size_t d = next++; d < docs && !failed; d = next++) {
      try {
        process(d);
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  ResultsTable table;
  table.config_hash = config_hash(config);
  table.attempted = docs * config.explainers.size() * 2 * config.levels.size() * config.seeds.size();
  for (auto& o : outcomes) {
    table.skipped_undefined_tau += o.skipped;
    for (auto& r : o.records) {
      table.flagged_short += r.k_reduced;
      table.flipped += r.argmax_flipped;
      table.records.push_back(std::move(r));
    }
  }
  if (!table.records.empty()) table.summaries = aggregate(table.records);

  table.train_accuracy = accuracy(model, data.train);
  table.eval_accuracy = accuracy(model, data.eval);
  for (std::size_t li = 0; li < config.levels.size(); ++li) {
    const int level = config.levels[li];
    table.level_accuracy.push_back(
        {PerturbationSource::kInput, level, level_to_sigma2(PerturbationSource::kInput, level),
         accuracy(input_models[0][li], data.eval)});
  }
  for (int level : config.levels) {
    std::size_t correct = 0;
    for (std::size_t d = 0; d < docs; ++d) {
      const auto spec = PerturbationSpec::at_level(
          PerturbationSource::kOutput, level,
          output_noise_seed(config.seeds[0], d, config.explainers[0], level));
      const OutputPerturbedSource wrapped(model, spec, config.output_noise);
      correct += wrapped.predict(data.eval[d].token_ids, {}, 0).argmax() == data.eval[d].label;
    }
    table.level_accuracy.push_back(
        {PerturbationSource::kOutput, level, level_to_sigma2(PerturbationSource::kOutput, level),
         docs == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(docs)});
  }
  return table;
}

ResultsTable run_comparison(const ExperimentConfig& config) {
  const auto data = prepare_data(config);
  const auto model = train_model(config, data);
  return compare(config, data, model);
}

void write_records_csv(std::ostream& out, const std::vector<DiscrepancyRecord>& records) {
  out << "doc_id,explainer,source,level,sigma2,seed,kendall_tau,topk_overlap,k,argmax_flipped\n";
  for (const auto& r : records) {
    out << r.doc_id << ',' << explainer_name(r.explainer) << ',' << source_name(r.source) << ','
        << r.level << ',' << format_double(r.sigma2) << ',' << r.seed << ','
        << format_double(r.kendall_tau) << ',' << format_double(r.topk_overlap) << ',' << r.k << ','
        << (r.argmax_flipped ? 1 : 0) << '\n';
  }
}

void write_summary_csv(std::ostream& out, const std::vector<MetricSummary>& summaries) {
  out << "explainer,source,level,metric,mean,stderr,n\n";
  for (const auto& s : summaries) {
    out << explainer_name(s.explainer) << ',' << source_name(s.source) << ',' << s.level << ','
        << s.metric << ',' << format_double(s.mean) << ',' << format_double(s.std_error) << ','
        << s.n << '\n';
  }
}

std::vector<DiscrepancyRecord> read_records_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) ||
      line != "doc_id,explainer,source,level,sigma2,seed,kendall_tau,topk_overlap,k,argmax_flipped") {
    throw DataError("records.csv: unexpected header");
  }
  std::vector<DiscrepancyRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 10) throw DataError("records.csv: expected 10 fields in '" + line + "'");
    DiscrepancyRecord r;
    r.doc_id = f[0];
    r.explainer = parse_explainer(f[1]);
    r.source = parse_source(f[2]);
    r.level = static_cast<int>(parse_u64(f[3]));
    r.sigma2 = parse_double(f[4]);
    r.seed = parse_u64(f[5]);
    r.kendall_tau = parse_double(f[6]);
    r.topk_overlap = parse_double(f[7]);
    r.k = parse_u64(f[8]);
    r.argmax_flipped = parse_u64(f[9]) != 0;
    records.push_back(std::move(r));
  }
  return records;
}

void emit_results(const ResultsTable& table, const ExperimentConfig& config,
                  const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());
  auto open = [&](const char* name) {
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    return out;
  };
  {
    auto out = open("records.csv");
    write_records_csv(out, table.records);
  }
  {
    auto out = open("summary.csv");
    write_summary_csv(out, table.summaries);
  }
  json accuracy = json::array();
  for (const auto& a : table.level_accuracy) {
    accuracy.push_back({{"source", source_name(a.source)},
                        {"level", a.level},
                        {"sigma2", a.sigma2},
                        {"accuracy", a.accuracy}});
  }
  json echo = {
      {"config", config.to_json()},
      {"provenance", {{"config_hash", table.config_hash}, {"code_version", table.code_version}}},
      {"run",
       {{"attempted", table.attempted},
        {"records", table.records.size()},
        {"skipped_undefined_tau", table.skipped_undefined_tau},
        {"flagged_short", table.flagged_short},
        {"argmax_flipped", table.flipped},
        {"train_accuracy", table.train_accuracy},
        {"eval_accuracy", table.eval_accuracy},
        {"level_accuracy", accuracy}}}};
  auto out = open("config.json");
  out << echo.dump(2) << '\n';
}

json explanation_to_json(const Explanation& e, std::string_view doc_id) {
  return {{"doc_id", doc_id},
          {"explainer", explainer_name(e.explainer)},
          {"target", e.target},
          {"scores", e.scores},
          {"ranking", e.ranking},
          {"seed", e.seed},
          {"m", e.samples}};
}

}  // namespace expstab
