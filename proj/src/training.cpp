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

#include "coattn/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "coattn/metrics.hpp"

namespace coattn {

template <typename T>
Var<T> mse_loss(Var<T> predictions, std::span<const T> golds) {
  if (golds.empty()) throw ValidationError("mse_loss: empty input");
  if (predictions.size() != golds.size()) {
    throw DimensionError("mse_loss: " + std::to_string(predictions.size()) + " predictions for " +
                         std::to_string(golds.size()) + " targets");
  }
  Tensor<T> target(predictions.shape());
  std::copy(golds.begin(), golds.end(), target.data().begin());
  Var<T> diff = sub(predictions, predictions.tape().constant(std::move(target)));
  return mean(mul(diff, diff));
}

double mse_loss(std::span<const double> predictions, std::span<const double> golds) {
  if (golds.empty()) throw ValidationError("mse_loss: empty input");
  if (predictions.size() != golds.size()) throw DimensionError("mse_loss: length mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < golds.size(); ++i) total += (predictions[i] - golds[i]) * (predictions[i] - golds[i]);
  return total / static_cast<double>(golds.size());
}

template <typename T>
void RmsProp<T>::step(const std::vector<std::pair<std::string, Tensor<T>*>>& params) {
  if (acc_.empty()) {
    for (const auto& entry : params) {
      acc_.emplace_back(entry.second->size(), 0.0);
      buf_.emplace_back(entry.second->size(), 0.0);
    }
  }
  if (acc_.size() != params.size()) throw UsageError("RmsProp: parameter list changed between steps");

  double norm_sq = 0.0;
  for (const auto& [name, tensor] : params) {
    if (!tensor->requires_grad() || !tensor->has_grad()) continue;
    for (T g : tensor->grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter " + name);
      norm_sq += static_cast<double>(g) * static_cast<double>(g);
    }
  }
  double factor = 1.0;
  const double norm = std::sqrt(norm_sq);
  if (options_.clip && norm > options_.clip_norm) factor = options_.clip_norm / norm;

  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor<T>& tensor = *params[p].second;
    if (!tensor.requires_grad() || !tensor.has_grad()) continue;
    auto grad = tensor.grad();
    std::vector<double>& acc = acc_[p];
    std::vector<double>& buf = buf_[p];
    for (std::size_t i = 0; i < tensor.size(); ++i) {
      const double g = static_cast<double>(grad[i]) * factor;
      acc[i] = options_.decay * acc[i] + (1.0 - options_.decay) * g * g;
      const double step = options_.learning_rate * g / std::sqrt(acc[i] + options_.epsilon);
      buf[i] = options_.momentum * buf[i] + step;
      tensor[i] = static_cast<T>(static_cast<double>(tensor[i]) - buf[i]);
    }
  }
}

EncodedSet encode_set(std::span<const EssayRecord> records, std::span<const std::size_t> indices,
                      const Vocabulary& vocab, const ModelConfig& config, const ScoreScale& scale) {
  EncodedSet set;
  set.docs.reserve(indices.size());
  for (std::size_t idx : indices) {
    const EssayRecord& r = records[idx];
    try {
      set.docs.push_back(encode_document(r.text, vocab, config));
    } catch (const DegenerateInputError& e) {
      throw DegenerateInputError("essay " + r.essay_id + ": " + e.what());
    }
    set.scores.push_back(r.score);
    set.targets.push_back(scale_score(r.score, scale));
  }
  return set;
}

template <typename T>
EpochResult train_epoch(EssayScorer<T>& scorer, const EncodedSet& train, const EncodedDocument& article,
                        const TrainOptions& options, RmsProp<T>& optimizer, std::mt19937_64& rng) {
  if (train.docs.empty()) throw ValidationError("train_epoch: no training documents");
  if (options.batch_size == 0) throw ConfigError("batch_size must be positive");
  std::vector<std::size_t> order(train.docs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  const Dropout dropout{scorer.config.dropout, &rng};
  auto named = scorer.params.named();
  EpochResult result;
  double weighted = 0.0;
  for (std::size_t start = 0, batch = 0; start < order.size(); start += options.batch_size, ++batch) {
    const std::size_t end = std::min(order.size(), start + options.batch_size);
    scorer.params.zero_grad();
    Tape<T> tape;
    ParamVars<T> vars = bind(tape, scorer.params);
    // The article is encoded once per batch and shared by every essay in it.
    EncodedSide<T> article_side = encode_document_side(vars, article, scorer.config, dropout);
    std::vector<Var<T>> scores;
    std::vector<T> golds;
    for (std::size_t k = start; k < end; ++k) {
      const std::size_t idx = order[k];
      EncodedSide<T> essay_side = encode_document_side(vars, train.docs[idx], scorer.config, dropout);
      scores.push_back(score_pair(vars, std::move(essay_side), article_side).score);
      golds.push_back(static_cast<T>(train.targets[idx]));
    }
    Var<T> loss = mse_loss(concat<T>(scores, 0), std::span<const T>(golds));
    const double loss_value = static_cast<double>(loss.value()[0]);
    if (!std::isfinite(loss_value)) throw NumericError("non-finite loss in batch " + std::to_string(batch));
    tape.backward(loss);
    try {
      optimizer.step(named);
    } catch (const NumericError& e) {
      throw NumericError("batch " + std::to_string(batch) + ": " + e.what());
    }
    result.batch_losses.push_back(loss_value);
    weighted += loss_value * static_cast<double>(end - start);
  }
  scorer.params.zero_grad();
  result.mean_loss = weighted / static_cast<double>(order.size());
  return result;
}

template <typename T>
std::vector<double> predict_scaled(const EssayScorer<T>& scorer, std::span<const EncodedDocument> docs,
                                   const EncodedDocument& article) {
  std::vector<double> out;
  out.reserve(docs.size());
  Tape<T> tape;
  ParamVars<T> vars = bind(tape, scorer.params);
  EncodedSide<T> article_side = encode_document_side(vars, article, scorer.config, Dropout{});
  for (const EncodedDocument& doc : docs) {
    EncodedSide<T> essay_side = encode_document_side(vars, doc, scorer.config, Dropout{});
    out.push_back(static_cast<double>(score_pair(vars, std::move(essay_side), article_side).score.value()[0]));
  }
  return out;
}

template <typename T>
std::vector<int> predict_scores(const EssayScorer<T>& scorer, std::span<const EncodedDocument> docs,
                                const EncodedDocument& article) {
  std::vector<int> out;
  for (double y : predict_scaled(scorer, docs, article)) out.push_back(unscale_score(y, scorer.scale));
  return out;
}

std::size_t select_best_epoch(std::span<const double> dev_qwks) {
  if (dev_qwks.empty()) throw ValidationError("select_best_epoch: no epochs");
  std::size_t best = 0;
  for (std::size_t i = 1; i < dev_qwks.size(); ++i) {
    if (dev_qwks[i] > dev_qwks[best]) best = i;
  }
  return best;
}

template <typename T>
TrainReport fit_with_selection(EssayScorer<T>& scorer, const EncodedSet& train, const EncodedSet& dev,
                               const EncodedDocument& article, const FitOptions& options) {
  if (options.train.epochs == 0) throw ConfigError("epochs must be positive");
  if (dev.docs.empty()) throw ValidationError("fit_with_selection: empty development set");
  TrainReport report;
  RmsProp<T> optimizer(options.train.optimizer);
  std::mt19937_64 rng(options.seed);
  ModelParams<T> best_params;
  bool have_best = false;
  try {
    for (std::size_t epoch = 0; epoch < options.train.epochs; ++epoch) {
      EpochLog log;
      log.epoch = epoch;
      log.train_loss = train_epoch(scorer, train, article, options.train, optimizer, rng).mean_loss;
      const auto predicted = predict_scores(scorer, std::span<const EncodedDocument>(dev.docs), article);
      log.dev_qwk = qwk(dev.scores, predicted, scorer.scale.min_score, scorer.scale.max_score);
      report.epochs.push_back(log);
      if (!have_best || log.dev_qwk > report.best_dev_qwk) {
        report.best_epoch = epoch;
        report.best_dev_qwk = log.dev_qwk;
        best_params = scorer.params;
        have_best = true;
      }
      if (options.on_epoch) options.on_epoch(log);
    }
  } catch (const Error& e) {
    if (have_best) scorer.params = best_params;
    throw TrainingFailure(std::string("training stopped after ") + std::to_string(report.epochs.size()) +
                              " epochs: " + e.what(),
                          report);
  }
  scorer.params = std::move(best_params);
  if (!options.checkpoint_path.empty()) {
    save_checkpoint(scorer, options.checkpoint_path);
    report.checkpoint = options.checkpoint_path;
  }
  return report;
}

#define COATTN_INSTANTIATE(T)                                                                                     \
  template Var<T> mse_loss(Var<T>, std::span<const T>);                                                           \
  template class RmsProp<T>;                                                                                      \
  template EpochResult train_epoch(EssayScorer<T>&, const EncodedSet&, const EncodedDocument&, const TrainOptions&, \
                                   RmsProp<T>&, std::mt19937_64&);                                                \
  template std::vector<double> predict_scaled(const EssayScorer<T>&, std::span<const EncodedDocument>,            \
                                              const EncodedDocument&);                                            \
  template std::vector<int> predict_scores(const EssayScorer<T>&, std::span<const EncodedDocument>,               \
                                           const EncodedDocument&);                                               \
  template TrainReport fit_with_selection(EssayScorer<T>&, const EncodedSet&, const EncodedSet&,                  \
                                          const EncodedDocument&, const FitOptions&);

COATTN_INSTANTIATE(float)
COATTN_INSTANTIATE(double)

#undef COATTN_INSTANTIATE

}  // namespace coattn
