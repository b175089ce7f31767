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

#ifndef COATTN_EVALUATION_HPP
#define COATTN_EVALUATION_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "coattn/data.hpp"
#include "coattn/metrics.hpp"
#include "coattn/training.hpp"

namespace coattn {

struct FoldOutcome {
  std::size_t fold = 0;
  std::size_t train_size = 0;
  std::size_t dev_size = 0;
  std::size_t test_size = 0;
  TrainReport train;
  std::vector<std::string> test_ids;
  std::vector<int> test_gold;
  std::vector<int> test_predicted;
  double test_qwk = 0.0;
};

struct CvReport {
  std::vector<FoldOutcome> folds;
  double mean_test_qwk = 0.0;
};

struct FoldData {
  std::size_t fold = 0;
  std::span<const EssayRecord> records;
  const FoldSplit* split = nullptr;
  const std::string* article = nullptr;
};

// What a fold runner hands back: one prediction per split->test index, in
// order, plus whatever training record it kept.
struct FoldPredictions {
  std::vector<int> test_predicted;
  TrainReport train;
};

using FoldRunner = std::function<FoldPredictions(const FoldData&)>;

// Splits into n_folds, runs `runner` on each fold (on up to `jobs` threads)
// and scores every fold's test predictions with QWK.
CvReport cross_validate_with(std::span<const EssayRecord> records, const std::string& article,
                             const ScoreScale& scale, std::size_t n_folds, std::uint64_t seed,
                             const FoldRunner& runner, std::size_t jobs = 1);

struct CvOptions {
  ModelConfig model;
  TrainOptions train;
  std::size_t n_folds = 5;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::optional<std::filesystem::path> embeddings;
  // When set, fold f's selected model is written to fold<f>.ckpt here.
  std::optional<std::filesystem::path> checkpoint_dir;
  // Called from the fold's worker thread.
  std::function<void(std::size_t fold, const EpochLog&)> on_epoch;
};

// Per fold: vocabulary from train essays and the article, fresh parameters,
// fit with dev-QWK selection, then test QWK of the selected model.
template <typename T>
CvReport cross_validate(std::span<const EssayRecord> records, const std::string& article, const ScoreScale& scale,
                        const CvOptions& options);

// Independent stream for (seed, fold, purpose); stable across builds.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t fold, std::uint64_t purpose);

struct AttentionReportRow {
  std::size_t index = 0;  // 1-based, document order
  std::string sentence;
  double attention = 0.0;
};

// Article-to-essay attention of every real essay sentence, from an
// eval-mode forward pass.
template <typename T>
std::vector<AttentionReportRow> attention_report(const EssayScorer<T>& scorer, const std::string& essay_text,
                                                 const std::string& article_text);

// "No.\tSentence\tAttention" header and one row per sentence, weights with
// five decimals.
std::string format_attention_table(std::span<const AttentionReportRow> rows);

}  // namespace coattn

#endif  // COATTN_EVALUATION_HPP
