// Copyright 2026 The coattn Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef COATTN_DATA_HPP
#define COATTN_DATA_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "coattn/document.hpp"
#include "coattn/model_config.hpp"
#include "coattn/tensor.hpp"

namespace coattn {

struct EssayRecord {
  std::string essay_id;
  std::string prompt_id;
  std::string text;
  int score = 0;
};

struct ScoreScale {
  int min_score = 0;
  int max_score = 1;

  void validate() const;
  bool contains(int score) const { return score >= min_score && score <= max_score; }
  bool operator==(const ScoreScale&) const = default;
};

// Score ranges of the eight public ASAP prompts, keyed by essay_set.
std::optional<ScoreScale> asap_score_range(const std::string& prompt_id);

enum class CorpusFormat { kCanonicalTsv, kAsapTsv };

CorpusFormat parse_corpus_format(const std::string& name);

struct CorpusOptions {
  CorpusFormat format = CorpusFormat::kCanonicalTsv;
  // Canonical files carry no range; records outside it are rejected. For
  // ASAP the published range of each prompt is used when this is unset.
  std::optional<ScoreScale> scale;
  // Keep only this prompt when set.
  std::optional<std::string> prompt_id;
};

// Canonical TSV: header row, columns essay_id, prompt_id, score, text.
// ASAP TSV: the public release with id/set/essay/domain1_score columns.
std::vector<EssayRecord> load_corpus(const std::filesystem::path& path, const CorpusOptions& options);

std::string read_text_file(const std::filesystem::path& path);

std::vector<std::string> split_sentences(std::string_view text);

inline constexpr std::string_view kNumToken = "<num>";

std::vector<std::string> tokenize(std::string_view sentence);

class Vocabulary {
 public:
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kUnkToken = "<unk>";

  Vocabulary();

  // Keeps the cap - 2 most frequent tokens of `texts`; ties break
  // lexicographically. Ids 0 and 1 are PAD and UNK.
  static Vocabulary build(std::span<const std::string> texts, std::size_t cap);
  // Rebuilds from an id-ordered token list (PAD and UNK first).
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  std::int32_t id(const std::string& token) const;
  const std::string& token(std::int32_t id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  bool contains(const std::string& token) const { return index_.count(token) != 0; }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> index_;
};

// Training essays plus the article; dev and test text never reaches the
// vocabulary.
Vocabulary build_vocab(std::span<const EssayRecord> train, const std::string& article, std::size_t cap);

EncodedDocument encode_document(std::string_view text, const Vocabulary& vocab, const ModelConfig& config);

double scale_score(int score, const ScoreScale& scale);
// Round half up to the nearest integer score, clamped to the range.
int unscale_score(double y, const ScoreScale& scale);

struct EmbeddingLoad {
  Tensor<float> matrix;  // vocab.size() x dim
  std::size_t hits = 0;
  double coverage = 0.0;  // hits over non-reserved vocabulary entries
};

EmbeddingLoad load_embeddings(const std::filesystem::path& path, const Vocabulary& vocab, std::size_t dim,
                              std::mt19937_64& rng);

struct FoldSplit {
  std::vector<std::size_t> train;  // indices into the record list
  std::vector<std::size_t> dev;
  std::vector<std::size_t> test;
};

std::vector<FoldSplit> make_folds(std::size_t record_count, std::size_t n_folds, std::uint64_t seed);

}  // namespace coattn

#endif  // COATTN_DATA_HPP
