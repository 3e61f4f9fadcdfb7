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

// Labeled text ingestion: TSV loading, tokenization, vocabulary construction
// and document encoding.

#ifndef EXPSTAB_CORPUS_H_
#define EXPSTAB_CORPUS_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace expstab {

using TokenId = std::int32_t;
using ClassId = std::int32_t;

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RawExample {
  ClassId label = 0;
  std::string text;
};

// Reads `label<TAB>text` lines. Labels must be non-negative integers (and below
// `num_classes` when given). Blank lines are skipped. An empty file yields an
// empty vector and a warning on `warnings`.
std::vector<RawExample> load_dataset(const std::filesystem::path& path,
                                     std::optional<int> num_classes = std::nullopt,
                                     std::ostream* warnings = nullptr);

std::vector<RawExample> parse_dataset(std::istream& in,
                                      std::optional<int> num_classes = std::nullopt,
                                      std::ostream* warnings = nullptr);

// Lowercases ASCII letters and splits on whitespace; every ASCII punctuation
// character becomes a token of its own.
std::vector<std::string> tokenize(std::string_view text);

class Vocabulary {
 public:
  static constexpr TokenId kPadId = 0;
  static constexpr TokenId kUnknownId = 1;
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kUnknownToken = "<unk>";

  // Keeps tokens whose corpus frequency is strictly greater than `threshold`.
  // Ids are assigned by descending frequency, ties broken lexicographically.
  static Vocabulary build(std::span<const RawExample> examples, std::size_t threshold);

  // Inverse of write_tsv.
  static Vocabulary read_tsv(std::istream& in);
  void write_tsv(std::ostream& out) const;

  // Unknown tokens map to kUnknownId.
  TokenId id(std::string_view token) const;
  const std::string& token(TokenId id) const;
  std::size_t frequency(TokenId id) const;
  bool contains(std::string_view token) const;

  // Including the two reserved ids.
  std::size_t size() const { return tokens_.size(); }
  std::size_t threshold() const { return threshold_; }

  bool operator==(const Vocabulary& other) const {
    return tokens_ == other.tokens_ && frequencies_ == other.frequencies_ &&
           threshold_ == other.threshold_;
  }

 private:
  Vocabulary() = default;
  void add(std::string token, std::size_t frequency);

  std::vector<std::string> tokens_;
  std::vector<std::size_t> frequencies_;
  std::unordered_map<std::string, TokenId> index_;
  std::size_t threshold_ = 0;
};

// The unit being explained. Never padded: padding is a batching concern and
// the built-in model pools variable-length input.
struct Document {
  std::vector<TokenId> token_ids;
  std::vector<std::string> tokens;
  ClassId label = 0;
  // Every token mapped to the unknown id.
  bool all_unknown = false;

  std::size_t size() const { return token_ids.size(); }
  std::string detokenize() const;
};

// Truncates to `max_length` tokens. Throws DataError when the text has no
// tokens at all.
Document encode(const RawExample& example, const Vocabulary& vocab, std::size_t max_length);

struct SyntheticCorpusOptions {
  std::size_t num_examples = 400;
  std::uint64_t seed = 7;
  // Probability that a sentiment-bearing clause agrees with the label.
  double agreement = 0.8;
};

// Small two-class movie-review style corpus used by the demos and the
// acceptance suite. Label 1 is positive.
std::vector<RawExample> synthetic_sentiment_corpus(const SyntheticCorpusOptions& options);

void write_dataset(std::ostream& out, std::span<const RawExample> examples);

}  // namespace expstab

#endif  // EXPSTAB_CORPUS_H_
