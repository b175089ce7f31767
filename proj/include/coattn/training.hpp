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

#ifndef COATTN_TRAINING_HPP
#define COATTN_TRAINING_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "coattn/data.hpp"
#include "coattn/model.hpp"

namespace coattn {

// Everything needed to score an essay: the network, its vocabulary and the
// prompt's score range.
template <typename T>
struct EssayScorer {
  ModelConfig config;
  Vocabulary vocab;
  ScoreScale scale;
  ModelParams<T> params;
};

// (1/N) * sum (y - gold)^2 over a [N] (or any-shape) prediction value.
template <typename T>
Var<T> mse_loss(Var<T> predictions, std::span<const T> golds);

double mse_loss(std::span<const double> predictions, std::span<const double> golds);

struct RmsPropOptions {
  double learning_rate = 0.001;
  double momentum = 0.9;
  double decay = 0.9;
  double epsilon = 1e-7;
  bool clip = true;
  double clip_norm = 10.0;
};

// RMS-normalised step fed through a classical momentum buffer:
//   acc <- decay * acc + (1 - decay) * g^2
//   buf <- momentum * buf + lr * g / sqrt(acc + eps)
//   theta <- theta - buf
template <typename T>
class RmsProp {
 public:
  explicit RmsProp(RmsPropOptions options = {}) : options_(options) {}

  // Reads each tensor's gradient buffer. Tensors that do not require grad
  // are skipped. Throws NumericError naming the first non-finite gradient.
  void step(const std::vector<std::pair<std::string, Tensor<T>*>>& params);

  const RmsPropOptions& options() const { return options_; }
  const std::vector<std::vector<double>>& accumulators() const { return acc_; }
  const std::vector<std::vector<double>>& momenta() const { return buf_; }

 private:
  RmsPropOptions options_;
  std::vector<std::vector<double>> acc_;
  std::vector<std::vector<double>> buf_;
};

// Documents of one split, encoded against a fixed vocabulary.
struct EncodedSet {
  std::vector<EncodedDocument> docs;
  std::vector<int> scores;
  std::vector<double> targets;  // scores scaled to [0, 1]
};

EncodedSet encode_set(std::span<const EssayRecord> records, std::span<const std::size_t> indices,
                      const Vocabulary& vocab, const ModelConfig& config, const ScoreScale& scale);

struct TrainOptions {
  RmsPropOptions optimizer;
  std::size_t batch_size = 100;
  std::size_t epochs = 100;
};

struct EpochResult {
  double mean_loss = 0.0;
  std::vector<double> batch_losses;
};

// One pass over `train` in a shuffled order drawn from rng: train-mode
// forward, MSE on scaled scores, backward and one optimizer step per batch.
template <typename T>
EpochResult train_epoch(EssayScorer<T>& scorer, const EncodedSet& train, const EncodedDocument& article,
                        const TrainOptions& options, RmsProp<T>& optimizer, std::mt19937_64& rng);

template <typename T>
std::vector<double> predict_scaled(const EssayScorer<T>& scorer, std::span<const EncodedDocument> docs,
                                   const EncodedDocument& article);

template <typename T>
std::vector<int> predict_scores(const EssayScorer<T>& scorer, std::span<const EncodedDocument> docs,
                                const EncodedDocument& article);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double dev_qwk = 0.0;
};

struct TrainReport {
  std::vector<EpochLog> epochs;
  std::size_t best_epoch = 0;
  double best_dev_qwk = 0.0;
  std::filesystem::path checkpoint;  // empty when nothing was written
};

// Index of the maximum, earliest on ties. Throws on an empty list.
std::size_t select_best_epoch(std::span<const double> dev_qwks);

class TrainingFailure : public NumericError {
 public:
  TrainingFailure(const std::string& what, TrainReport partial) : NumericError(what), partial_(std::move(partial)) {}
  const TrainReport& partial() const { return partial_; }

 private:
  TrainReport partial_;
};

struct FitOptions {
  TrainOptions train;
  std::uint64_t seed = 0;
  // When set, the best epoch's parameters are also saved here.
  std::filesystem::path checkpoint_path;
  std::function<void(const EpochLog&)> on_epoch;
};

// Trains for options.train.epochs epochs, scoring dev QWK after each, and
// leaves the scorer holding the parameters of the best dev epoch.
template <typename T>
TrainReport fit_with_selection(EssayScorer<T>& scorer, const EncodedSet& train, const EncodedSet& dev,
                               const EncodedDocument& article, const FitOptions& options);

inline constexpr int kCheckpointVersion = 1;

template <typename T>
void save_checkpoint(const EssayScorer<T>& scorer, const std::filesystem::path& path);

// Converts to T when the file was written in the other precision.
template <typename T>
EssayScorer<T> load_checkpoint(const std::filesystem::path& path);

}  // namespace coattn

#endif  // COATTN_TRAINING_HPP
