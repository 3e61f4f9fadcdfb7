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

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "expstab/csv.h"

namespace expstab {
namespace {

namespace fs = std::filesystem;

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.synthetic = SyntheticConfig{200, 3};
  c.eval_doc_count = 2;
  c.train_limit = 150;
  c.samples = 60;
  c.permutations = 4;
  c.model.dim = 16;
  c.model.epochs = 5;
  c.threads = 2;
  return c;
}

struct Fixture {
  ExperimentConfig config;
  PreparedData data;
  EmbeddingClassifier model;

  explicit Fixture(ExperimentConfig c)
      : config(std::move(c)), data(prepare_data(config)), model(train_model(config, data)) {}
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("expstab_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

TEST(Compare, LevelZeroIsIdentity) {
  auto c = small_config();
  c.levels = {0};
  c.eval_doc_count = 4;
  const Fixture f(c);
  const auto t = compare(f.config, f.data, f.model);
  ASSERT_FALSE(t.records.empty());
  for (const auto& r : t.records) {
    EXPECT_EQ(r.kendall_tau, 1.0);
    EXPECT_EQ(r.topk_overlap, 1.0);
    EXPECT_EQ(r.sigma2, 0.0);
    EXPECT_FALSE(r.argmax_flipped);
  }
  EXPECT_EQ(t.skipped_undefined_tau, 0u);
}

TEST(Compare, CardinalityAndConservation) {
  const Fixture f(small_config());
  const auto t = compare(f.config, f.data, f.model);
  EXPECT_EQ(t.attempted, 60u);
  EXPECT_EQ(t.records.size() + t.skipped_undefined_tau, t.attempted);
  EXPECT_EQ(t.records.size(), 60u);
  EXPECT_LE(t.flagged_short, t.records.size());
  EXPECT_EQ(t.summaries.size(), 3u * 2u * 5u * 2u);
  for (const auto& r : t.records) {
    EXPECT_EQ(r.sigma2, level_to_sigma2(r.source, r.level));
    if (r.level == 0) {
      EXPECT_EQ(r.kendall_tau, 1.0);
      EXPECT_EQ(r.topk_overlap, 1.0);
    }
  }
}

TEST(Compare, ShortDocumentsLowerKAndAreFlagged) {
  auto c = small_config();
  c.k = 40;
  c.max_length = 6;
  c.levels = {0, 1};
  const Fixture f(c);
  const auto t = compare(f.config, f.data, f.model);
  EXPECT_EQ(t.flagged_short, t.records.size());
  for (const auto& r : t.records) {
    EXPECT_TRUE(r.k_reduced);
    EXPECT_LE(r.k, 6u);
  }
}

TEST(Compare, ReplayIsBitIdenticalAndThreadCountFree) {
  auto c = small_config();
  c.seeds = {1, 2};
  const Fixture f(c);
  const auto a = compare(f.config, f.data, f.model);
  const auto b = run_comparison(c);
  auto c1 = c;
  c1.threads = 1;
  const auto s = compare(c1, f.data, f.model);
  EXPECT_EQ(a.records, b.records);
  EXPECT_EQ(a.summaries, b.summaries);
  EXPECT_EQ(a.records, s.records);
  const auto d1 = scratch("replay1");
  const auto d2 = scratch("replay2");
  emit_results(a, c, d1);
  emit_results(b, c, d2);
  EXPECT_EQ(slurp(d1 / "records.csv"), slurp(d2 / "records.csv"));
  EXPECT_EQ(slurp(d1 / "summary.csv"), slurp(d2 / "summary.csv"));
}

TEST(EmitResults, EmptyTableWritesHeadersOnly) {
  const auto dir = scratch("empty");
  emit_results(ResultsTable{}, small_config(), dir);
  EXPECT_EQ(slurp(dir / "records.csv"),
            "doc_id,explainer,source,level,sigma2,seed,kendall_tau,topk_overlap,k,argmax_flipped\n");
  EXPECT_EQ(slurp(dir / "summary.csv"), "explainer,source,level,metric,mean,stderr,n\n");
  const auto j = nlohmann::json::parse(slurp(dir / "config.json"));
  EXPECT_TRUE(j.contains("config"));
  EXPECT_TRUE(j.contains("provenance"));
}

TEST(EmitResults, RecordFieldsRoundTrip) {
  DiscrepancyRecord r;
  r.doc_id = "17";
  r.explainer = ExplainerKind::kKernelShap;
  r.source = PerturbationSource::kInput;
  r.level = 3;
  r.sigma2 = 0.15;
  r.seed = 99;
  r.kendall_tau = 0.123456789012345;
  r.topk_overlap = 0.6;
  r.k = 5;
  r.argmax_flipped = true;
  std::stringstream ss;
  write_records_csv(ss, {r});
  const auto back = read_records_csv(ss);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0], r);
}

TEST(EmitResults, UnwritablePathFails) {
  const auto dir = scratch("blocked");
  std::ofstream(dir / "file") << "x";
  EXPECT_ANY_THROW(emit_results(ResultsTable{}, small_config(), dir / "file" / "sub"));
}

TEST(EmitResults, SummaryAgreesWithRecomputationFromRecords) {
  auto c = small_config();
  c.eval_doc_count = 5;
  const auto t = run_comparison(c);
  const auto dir = scratch("summary");
  emit_results(t, c, dir);

  std::ifstream rin(dir / "records.csv");
  std::string line;
  std::getline(rin, line);
  std::map<std::tuple<std::string, std::string, std::string, std::string>, std::vector<double>> groups;
  while (std::getline(rin, line)) {
    const auto f = split_csv_line(line);
    ASSERT_EQ(f.size(), 10u);
    groups[{f[1], f[2], f[3], "kendall_tau"}].push_back(parse_double(f[6]));
    groups[{f[1], f[2], f[3], "topk_overlap"}].push_back(parse_double(f[7]));
  }
  std::ifstream sin(dir / "summary.csv");
  std::getline(sin, line);
  std::size_t rows = 0;
  while (std::getline(sin, line)) {
    const auto f = split_csv_line(line);
    ASSERT_EQ(f.size(), 7u);
    const auto& v = groups.at({f[0], f[1], f[2], f[3]});
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double se = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) /
                                         std::sqrt(static_cast<double>(v.size()))
                                   : 0.0;
    EXPECT_NEAR(parse_double(f[4]), mean, 1e-9);
    EXPECT_NEAR(parse_double(f[5]), se, 1e-9);
    EXPECT_EQ(parse_u64(f[6]), v.size());
    ++rows;
  }
  EXPECT_EQ(rows, groups.size());
}

TEST(Config, JsonRoundTripAndValidation) {
  const auto c = small_config();
  const auto back = ExperimentConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(config_hash(back), config_hash(c));

  auto j = c.to_json();
  j["bogus"] = 1;
  EXPECT_THROW(ExperimentConfig::from_json(j), std::invalid_argument);
  j = c.to_json();
  j["model"]["depth"] = 3;
  EXPECT_THROW(ExperimentConfig::from_json(j), std::invalid_argument);
  j = c.to_json();
  j["levels"] = {0, 5};
  EXPECT_ANY_THROW(ExperimentConfig::from_json(j));
  j = c.to_json();
  j["explainers"] = {"lime", "lime"};
  EXPECT_THROW(ExperimentConfig::from_json(j), std::invalid_argument);
  j = c.to_json();
  j["samples"] = "many";
  EXPECT_THROW(ExperimentConfig::from_json(j), std::invalid_argument);
  EXPECT_THROW(ExperimentConfig::from_json(nlohmann::json::object()), std::invalid_argument);
}

TEST(PrepareData, SplitIsDeterministicAndDisjoint) {
  const auto c = small_config();
  const auto a = prepare_data(c);
  const auto b = prepare_data(c);
  EXPECT_EQ(a.eval_ids, b.eval_ids);
  EXPECT_EQ(a.vocab, b.vocab);
  EXPECT_EQ(a.eval.size() + a.eval_rejected, c.eval_doc_count);
  EXPECT_EQ(a.train.size(), c.train_limit);
  EXPECT_EQ(a.num_classes, 2u);
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(EXPSTAB_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run_cli("version"), 0);
  EXPECT_EQ(run_cli("compare --no-such-flag"), 2);
  EXPECT_EQ(run_cli("frobnicate"), 2);
  EXPECT_EQ(run_cli(""), 2);
  EXPECT_EQ(run_cli("compare --config /nonexistent/cfg.json"), 1);
}

TEST(Cli, CompareWritesOutputs) {
  const auto dir = scratch("cli");
  auto c = small_config();
  c.output_dir = (dir / "out").string();
  std::ofstream(dir / "cfg.json") << c.to_json().dump(2);
  ASSERT_EQ(run_cli("compare --config " + (dir / "cfg.json").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "out" / "records.csv"));
  EXPECT_TRUE(fs::exists(dir / "out" / "summary.csv"));
  EXPECT_TRUE(fs::exists(dir / "out" / "config.json"));
  ASSERT_EQ(run_cli("compare --config " + (dir / "cfg.json").string() + " --out " +
                    (dir / "over").string() + " --seed 5"),
            0);
  EXPECT_TRUE(fs::exists(dir / "over" / "records.csv"));
}

TEST(Cli, ConditioningAndExplain) {
  const auto dir = scratch("cli_cond");
  ASSERT_EQ(run_cli("conditioning --lengths 6,8 --iters 5 --m 30 --out " + dir.string()), 0);
  EXPECT_TRUE(fs::exists(dir / "kappa.csv"));
  EXPECT_TRUE(fs::exists(dir / "kappa_bins.csv"));
  const std::string out = (dir / "explain.txt").string();
  const std::string cmd = std::string(EXPSTAB_CLI_PATH) +
                          " explain --method lime --text \"I love classical music\" > " + out;
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  const auto text = slurp(out);
  EXPECT_NE(text.find("classical"), std::string::npos);
  EXPECT_NE(text.find("music"), std::string::npos);
}

}  // namespace
}  // namespace expstab
