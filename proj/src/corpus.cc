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

#include "expstab/corpus.h"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "expstab/random.h"

namespace expstab {
namespace {

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool is_punct(unsigned char c) { return c < 128 && std::ispunct(c) != 0; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && is_space(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string line_error(std::size_t line_no, std::string_view what) {
  return "line " + std::to_string(line_no) + ": " + std::string(what);
}

}  // namespace

std::vector<RawExample> parse_dataset(std::istream& in, std::optional<int> num_classes,
                                      std::ostream* warnings) {
  std::vector<RawExample> examples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw DataError(line_error(line_no, "expected label<TAB>text"));
    }
    const std::string_view label_field = trim(std::string_view(line).substr(0, tab));
    const std::string_view text = trim(std::string_view(line).substr(tab + 1));
    int label = -1;
    const auto [end, ec] =
        std::from_chars(label_field.data(), label_field.data() + label_field.size(), label);
    if (ec != std::errc() || end != label_field.data() + label_field.size() || label < 0) {
      throw DataError(line_error(line_no, "label '" + std::string(label_field) +
                                              "' is not a non-negative integer"));
    }
    if (num_classes && label >= *num_classes) {
      throw DataError(line_error(line_no, "label " + std::to_string(label) +
                                              " outside [0, " + std::to_string(*num_classes) + ")"));
    }
    if (text.empty()) throw DataError(line_error(line_no, "empty text"));
    examples.push_back(RawExample{label, std::string(text)});
  }
  if (examples.empty() && warnings != nullptr) {
    *warnings << "warning: dataset contains no examples\n";
  }
  return examples;
}

std::vector<RawExample> load_dataset(const std::filesystem::path& path,
                                     std::optional<int> num_classes, std::ostream* warnings) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset " + path.string());
  try {
    return parse_dataset(in, num_classes, warnings);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_dataset(std::ostream& out, std::span<const RawExample> examples) {
  for (const auto& e : examples) out << e.label << '\t' << e.text << '\n';
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_space(c)) {
      flush();
    } else if (is_punct(c)) {
      flush();
      tokens.emplace_back(1, ch);
    } else {
      current.push_back(c < 128 ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  flush();
  return tokens;
}

void Vocabulary::add(std::string token, std::size_t frequency) {
  const auto id = static_cast<TokenId>(tokens_.size());
  index_.emplace(token, id);
  tokens_.push_back(std::move(token));
  frequencies_.push_back(frequency);
}

Vocabulary Vocabulary::build(std::span<const RawExample> examples, std::size_t threshold) {
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& e : examples) {
    for (auto& t : tokenize(e.text)) ++counts[std::move(t)];
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [token, n] : counts) {
    if (n > threshold) kept.emplace_back(token, n);
  }
  if (kept.empty()) {
    throw DataError("vocabulary is empty: no token occurs more than " +
                    std::to_string(threshold) + " times");
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });

  Vocabulary vocab;
  vocab.threshold_ = threshold;
  vocab.add(std::string(kPadToken), 0);
  vocab.add(std::string(kUnknownToken), 0);
  for (auto& [token, n] : kept) vocab.add(std::move(token), n);
  return vocab;
}

TokenId Vocabulary::id(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  if (it == index_.end() || it->second == kPadId || it->second == kUnknownId) return kUnknownId;
  return it->second;
}

bool Vocabulary::contains(std::string_view token) const { return id(token) != kUnknownId; }

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw std::out_of_range("token id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::size_t Vocabulary::frequency(TokenId id) const {
  token(id);
  return frequencies_[static_cast<std::size_t>(id)];
}

void Vocabulary::write_tsv(std::ostream& out) const {
  out << "# low_freq_threshold=" << threshold_ << '\n';
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    out << tokens_[i] << '\t' << i << '\t' << frequencies_[i] << '\n';
  }
}

Vocabulary Vocabulary::read_tsv(std::istream& in) {
  Vocabulary vocab;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line.front() == '#') {
      constexpr std::string_view key = "# low_freq_threshold=";
      if (line.starts_with(key)) vocab.threshold_ = std::stoull(line.substr(key.size()));
      continue;
    }
    std::istringstream fields(line);
    std::string token, id_field, freq_field;
    if (!std::getline(fields, token, '\t') || !std::getline(fields, id_field, '\t') ||
        !std::getline(fields, freq_field)) {
      throw DataError(line_error(line_no, "expected token<TAB>id<TAB>freq"));
    }
    if (std::stoull(id_field) != vocab.tokens_.size()) {
      throw DataError(line_error(line_no, "ids must be dense and sorted"));
    }
    vocab.add(token, std::stoull(freq_field));
  }
  if (vocab.size() < 3 || vocab.tokens_[kPadId] != kPadToken ||
      vocab.tokens_[kUnknownId] != kUnknownToken) {
    throw DataError("vocabulary dump is missing reserved tokens or has no entries");
  }
  return vocab;
}

std::string Document::detokenize() const {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

Document encode(const RawExample& example, const Vocabulary& vocab, std::size_t max_length) {
  if (max_length == 0) throw std::invalid_argument("max_length must be at least 1");
  auto tokens = tokenize(example.text);
  if (tokens.empty()) throw DataError("document has no tokens and cannot be explained");
  if (tokens.size() > max_length) tokens.resize(max_length);

  Document doc;
  doc.label = example.label;
  doc.token_ids.reserve(tokens.size());
  for (const auto& t : tokens) doc.token_ids.push_back(vocab.id(t));
  doc.tokens = std::move(tokens);
  doc.all_unknown = std::all_of(doc.token_ids.begin(), doc.token_ids.end(),
                                [](TokenId id) { return id == Vocabulary::kUnknownId; });
  return doc;
}

namespace {

constexpr std::array kPositive = {"wonderful", "great",     "brilliant", "superb",
                                  "delightful", "charming", "moving",    "beautiful",
                                  "excellent", "fantastic", "enjoyable", "gripping",
                                  "clever",    "touching",  "stunning",  "memorable"};
constexpr std::array kNegative = {"awful",  "terrible", "boring",   "dull",
                                  "painful", "clumsy",  "tedious",  "bland",
                                  "weak",   "disappointing", "mediocre", "annoying",
                                  "messy",  "forgettable", "lifeless", "predictable"};
constexpr std::array kSubjects = {"movie", "film",    "plot",  "acting",    "story",
                                  "cast",  "script",  "ending", "music",    "director",
                                  "scenes", "characters", "soundtrack", "dialogue", "camera work"};
constexpr std::array kDegree = {"really", "quite", "very", "truly", "rather", "so"};
constexpr std::array kOpeners = {"honestly", "overall", "in the end", "for me", "sadly",
                                 "surprisingly", "as expected"};
constexpr std::array kVerbs = {"was", "is", "felt", "seemed"};
constexpr std::array kPositiveVerbs = {"i loved", "we enjoyed", "i admired", "everyone liked"};
constexpr std::array kNegativeVerbs = {"i hated", "we disliked", "i regretted", "nobody liked"};

template <typename Array>
std::string_view pick(Rng& rng, const Array& values) {
  return values[rng.below(values.size())];
}

}  // namespace

std::vector<RawExample> synthetic_sentiment_corpus(const SyntheticCorpusOptions& options) {
  Rng rng(options.seed);
  std::vector<RawExample> out;
  out.reserve(options.num_examples);
  for (std::size_t n = 0; n < options.num_examples; ++n) {
    const ClassId label = static_cast<ClassId>(rng.below(2));
    const std::size_t clauses = 2 + rng.below(2);
    std::string text;
    if (rng.uniform() < 0.4) {
      text += pick(rng, kOpeners);
      text += ", ";
    }
    for (std::size_t c = 0; c < clauses; ++c) {
      // The first clause always agrees with the label.
      const bool agrees = c == 0 || rng.uniform() < options.agreement;
      const bool positive = (label == 1) == agrees;
      if (c > 0) text += rng.uniform() < 0.5 ? " and " : (rng.uniform() < 0.5 ? ", but " : ". ");
      if (rng.uniform() < 0.3) {
        text += positive ? pick(rng, kPositiveVerbs) : pick(rng, kNegativeVerbs);
        text += " the ";
        text += pick(rng, kSubjects);
      } else {
        text += "the ";
        text += pick(rng, kSubjects);
        text += ' ';
        text += pick(rng, kVerbs);
        text += ' ';
        if (rng.uniform() < 0.5) {
          text += pick(rng, kDegree);
          text += ' ';
        }
        text += positive ? pick(rng, kPositive) : pick(rng, kNegative);
      }
    }
    text += rng.uniform() < 0.3 ? " !" : " .";
    out.push_back(RawExample{label, std::move(text)});
  }
  return out;
}

}  // namespace expstab
