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

// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit when any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "coattn/app.hpp"
#include "coattn/evaluation.hpp"
#include "coattn/grad_check.hpp"
#include "coattn/metrics.hpp"
#include "coattn/training.hpp"
#include "qwk_oracle.hpp"
#include "test_support.hpp"

namespace coattn {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

// ---------------------------------------------------------------- 1

constexpr double kGradTolerance = 1e-4;
constexpr double kGradSeconds = 60.0;

GradCheckResult full_model_check(const ModelConfig& config, std::uint64_t seed, std::size_t max_entries) {
  std::mt19937_64 rng(seed);
  const std::size_t vocab = 30;
  auto params = ModelParams<double>::glorot(config, vocab, rng);
  // Nonzero biases so every path carries gradient.
  for (auto& [name, t] : params.named()) {
    if (name.find(".b") != std::string::npos) *t = testing::random_tensor(t->shape(), rng, -0.3, 0.3);
  }
  const auto essay = testing::random_document(config, vocab, 2, rng);
  const auto article = testing::random_document(config, vocab, 2, rng);
  auto named = params.named();
  std::vector<GradCheckInput> inputs;
  for (auto& [name, t] : named) inputs.push_back({name, t});
  auto body = [&](auto& tape, auto v) {
    using T = std::remove_cvref_t<decltype(v[0].value()[0])>;
    ParamVars<T> p;
    p.embedding = v[0];
    p.conv_w = v[1];
    p.conv_b = v[2];
    p.pool_w = v[3];
    p.pool_b = v[4];
    p.pool_v = v[5];
    p.sentence_lstm = {v[6], v[7], v[8], v[9], v[10], v[11], v[12], v[13]};
    p.sim_w = v[14];
    p.sim_b = v[15];
    p.modeling_lstm = {v[16], v[17], v[18], v[19], v[20], v[21], v[22], v[23]};
    p.out_w = v[24];
    p.out_b = v[25];
    return sum(forward_full(tape, p, essay, article, config).score);
  };
  return grad_check_extended(body, body, inputs, 1e-5, max_entries, seed);
}

Outcome gradient_fidelity() {
  const auto start = Clock::now();
  // Every entry of a small network, then a sample of every tensor at the
  // default sizes.
  ModelConfig small = testing::tiny_config();
  small.max_tokens = 8;
  const auto exhaustive = full_model_check(small, 1, 0);
  ModelConfig full;
  full.max_tokens = 12;
  const auto sampled = full_model_check(full, 2, 40);
  const double elapsed = seconds_since(start);
  const double worst = std::max(exhaustive.max_rel_error, sampled.max_rel_error);
  std::ostringstream d;
  d << "max_rel_error=" << worst << " (small: " << exhaustive.entries_checked << " entries, worst "
    << exhaustive.worst_input << "; default: " << sampled.entries_checked << " entries, worst " << sampled.worst_input
    << ") tolerance=" << kGradTolerance << " time=" << elapsed << "s limit=" << kGradSeconds << "s";
  return {worst < kGradTolerance && elapsed < kGradSeconds, d.str()};
}

// ---------------------------------------------------------------- 2

constexpr double kSumTolerance = 1e-6;

struct NormCheck {
  double worst_sum_error = 0.0;
  std::size_t masked_nonzero = 0;
  std::size_t distributions = 0;

  void row(std::span<const double> values, std::span<const std::uint8_t> mask) {
    double total = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      total += values[i];
      if (!mask[i] && values[i] != 0.0) ++masked_nonzero;
    }
    worst_sum_error = std::max(worst_sum_error, std::abs(total - 1.0));
    ++distributions;
  }
};

void check_pool(NormCheck& check, const EncodedSide<double>& side) {
  const Tensor<double>& v = side.window_weights.value();
  const std::size_t p = v.dim(1);
  for (std::size_t s = 0; s < v.dim(0); ++s) {
    check.row(v.data().subspan(s * p, p), std::span<const std::uint8_t>(side.extent.window_mask).subspan(s * p, p));
  }
}

Outcome normalization_suite() {
  ModelConfig config;
  config.max_sentences = 12;
  config.max_tokens = 16;
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> count(1, 10);
  std::uniform_real_distribution<double> gain(0.5, 4.0);
  const std::size_t vocab = 60;
  NormCheck check;
  for (int trial = 0; trial < 500; ++trial) {
    auto params = ModelParams<double>::glorot(config, vocab, rng);
    const double g = gain(rng);
    for (auto& [name, t] : params.named()) {
      for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] *= g;
    }
    const auto essay = testing::random_document(config, vocab, count(rng), rng);
    const auto article = testing::random_document(config, vocab, count(rng), rng);
    Tape<double> tape;
    // Padded to the configured maximum so masked positions are present.
    const auto trace = forward_full(tape, bind(tape, params), essay, article, config, {}, false);
    check_pool(check, trace.essay);
    check_pool(check, trace.article);
    const Tensor<double>& ea = trace.essay_to_article.value();
    const std::size_t sa = ea.dim(1);
    for (std::size_t t = 0; t < ea.dim(0); ++t) {
      check.row(ea.data().subspan(t * sa, sa), trace.article.extent.sentence_mask);
    }
    check.row(trace.article_to_essay.value().data(), trace.essay.extent.sentence_mask);
  }
  std::ostringstream d;
  d << check.distributions << " distributions, worst |sum-1|=" << check.worst_sum_error
    << " tolerance=" << kSumTolerance << ", nonzero masked entries=" << check.masked_nonzero;
  return {check.worst_sum_error <= kSumTolerance && check.masked_nonzero == 0, d.str()};
}

// ---------------------------------------------------------------- 3

constexpr double kQwkTolerance = 1e-10;

Outcome qwk_equivalence() {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> size(1, 50), range(1, 5), shift(-5, 5);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int lo = shift(rng), r = range(rng), n = size(rng);
    std::uniform_int_distribution<int> rating(lo, lo + r - 1);
    std::vector<int> gold(n), pred(n);
    for (int i = 0; i < n; ++i) {
      gold[i] = rating(rng);
      pred[i] = rating(rng);
    }
    worst = std::max(worst, std::abs(qwk(gold, pred, lo, lo + r - 1) - testing::qwk_oracle(gold, pred, lo, lo + r - 1)));
  }
  const double zero = qwk(std::vector<int>{0, 0, 1, 1}, std::vector<int>{0, 1, 0, 1}, 0, 1);
  const double minus_one = qwk(std::vector<int>{1, 2, 3}, std::vector<int>{3, 2, 1}, 1, 3);
  std::ostringstream d;
  d << "1000 instances, worst |qwk-oracle|=" << worst << " tolerance=" << kQwkTolerance << "; hand cases "
    << zero << " (expect 0) and " << minus_one << " (expect -1)";
  return {worst <= kQwkTolerance && zero == 0.0 && minus_one == -1.0, d.str()};
}

// ---------------------------------------------------------------- 4

constexpr double kLearnTarget = 0.95;
constexpr double kControlCeiling = 0.5;
constexpr std::size_t kLearnEpochs = 100;
constexpr double kLearnSeconds = 300.0;

struct LearnRun {
  std::vector<double> qwk_per_epoch;
  double seconds = 0.0;
};

// Trains on all 32 essays with the default hyper-parameters and records the
// training-set QWK after every epoch; stops early once `stop_at` is reached.
LearnRun learn(std::vector<EssayRecord> records, std::uint64_t seed, std::optional<double> stop_at) {
  std::mt19937_64 rng(seed);
  EssayScorer<float> scorer;
  scorer.scale = {0, 3};
  scorer.vocab = build_vocab(records, testing::synthetic_article(), scorer.config.vocab_size);
  scorer.params = ModelParams<float>::glorot(scorer.config, scorer.vocab.size(), rng);
  std::vector<std::size_t> all(records.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto set = encode_set(records, all, scorer.vocab, scorer.config, scorer.scale);
  const auto article = encode_document(testing::synthetic_article(), scorer.vocab, scorer.config);
  const TrainOptions options;
  RmsProp<float> optimizer(options.optimizer);
  LearnRun run;
  const auto start = Clock::now();
  for (std::size_t epoch = 0; epoch < kLearnEpochs; ++epoch) {
    train_epoch(scorer, set, article, options, optimizer, rng);
    const auto predicted = predict_scores(scorer, std::span<const EncodedDocument>(set.docs), article);
    run.qwk_per_epoch.push_back(qwk(set.scores, predicted, 0, 3));
    if (stop_at && run.qwk_per_epoch.back() >= *stop_at) break;
  }
  run.seconds = seconds_since(start);
  return run;
}

Outcome learnability() {
  std::mt19937_64 rng(4);
  const auto records = testing::synthetic_essays(32, rng);
  auto shuffled = records;
  std::vector<int> labels;
  for (const auto& r : records) labels.push_back(r.score);
  std::shuffle(labels.begin(), labels.end(), rng);
  for (std::size_t i = 0; i < shuffled.size(); ++i) shuffled[i].score = labels[i];

  const LearnRun real = learn(records, 5, kLearnTarget);
  const LearnRun control = learn(shuffled, 5, std::nullopt);
  const double real_best = *std::max_element(real.qwk_per_epoch.begin(), real.qwk_per_epoch.end());
  const double control_best = *std::max_element(control.qwk_per_epoch.begin(), control.qwk_per_epoch.end());
  const std::size_t matched = std::min(real.qwk_per_epoch.size(), control.qwk_per_epoch.size());
  const double control_matched =
      *std::max_element(control.qwk_per_epoch.begin(), control.qwk_per_epoch.begin() + matched);
  const bool real_ok = real_best >= kLearnTarget;
  const bool control_ok = control_best < kControlCeiling;
  const bool time_ok = real.seconds + control.seconds < kLearnSeconds;
  std::ostringstream d;
  d << "training QWK " << real_best << " after " << real.qwk_per_epoch.size() << " epochs (target " << kLearnTarget
    << "); shuffled-label control max QWK over " << control.qwk_per_epoch.size() << " epochs=" << control_best
    << " (ceiling " << kControlCeiling << ", max within the first " << matched << " epochs=" << control_matched
    << "); time=" << real.seconds + control.seconds << "s limit=" << kLearnSeconds << "s";
  return {real_ok && control_ok && time_ok, d.str()};
}

// ---------------------------------------------------------------- 5

bool fold_partition_ok(std::size_t n, std::uint64_t seed, bool exact_sizes) {
  const auto folds = make_folds(n, 5, seed);
  if (folds.size() != 5) return false;
  std::vector<std::size_t> tested;
  for (std::size_t f = 0; f < 5; ++f) {
    const FoldSplit& s = folds[f];
    std::vector<std::size_t> all = s.train;
    all.insert(all.end(), s.dev.begin(), s.dev.end());
    all.insert(all.end(), s.test.begin(), s.test.end());
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> expected(n);
    std::iota(expected.begin(), expected.end(), std::size_t{0});
    if (all != expected) return false;
    if (s.dev != folds[(f + 1) % 5].test) return false;
    if (exact_sizes && (s.train.size() * 5 != 3 * n || s.dev.size() * 5 != n || s.test.size() * 5 != n)) return false;
    if (!exact_sizes && (s.test.size() < n / 5 || s.test.size() > n / 5 + 1)) return false;
    tested.insert(tested.end(), s.test.begin(), s.test.end());
  }
  std::sort(tested.begin(), tested.end());
  return std::adjacent_find(tested.begin(), tested.end()) == tested.end() && tested.size() == n;
}

Outcome protocol_fidelity() {
  bool splits_ok = true;
  for (std::size_t n : {5, 10, 50, 100, 1725}) splits_ok = splits_ok && fold_partition_ok(n, n, true);
  for (std::size_t n : {6, 7, 23, 1726}) splits_ok = splits_ok && fold_partition_ok(n, n, false);

  // Best-epoch restore on a small model.
  std::mt19937_64 rng(6);
  const auto records = testing::synthetic_essays(30, rng);
  EssayScorer<double> scorer;
  scorer.config = testing::tiny_config();
  scorer.config.max_tokens = 10;
  scorer.scale = {0, 3};
  scorer.vocab = build_vocab(records, testing::synthetic_article(), scorer.config.vocab_size);
  scorer.params = ModelParams<double>::glorot(scorer.config, scorer.vocab.size(), rng);
  std::vector<std::size_t> train_idx(20), dev_idx(10);
  std::iota(train_idx.begin(), train_idx.end(), std::size_t{0});
  std::iota(dev_idx.begin(), dev_idx.end(), std::size_t{20});
  const auto train = encode_set(records, train_idx, scorer.vocab, scorer.config, scorer.scale);
  const auto dev = encode_set(records, dev_idx, scorer.vocab, scorer.config, scorer.scale);
  const auto article = encode_document(testing::synthetic_article(), scorer.vocab, scorer.config);
  testing::TempDir dir;
  FitOptions options;
  options.train.epochs = 12;
  options.train.batch_size = 5;
  options.train.optimizer.learning_rate = 0.01;
  options.seed = 6;
  options.checkpoint_path = dir.path() / "best.ckpt";
  const auto report = fit_with_selection(scorer, train, dev, article, options);
  std::vector<double> qwks;
  for (const auto& e : report.epochs) qwks.push_back(e.dev_qwk);
  const std::size_t expected_best =
      static_cast<std::size_t>(std::max_element(qwks.begin(), qwks.end()) - qwks.begin());
  const auto restored = load_checkpoint<double>(options.checkpoint_path);
  const double restored_qwk =
      qwk(dev.scores, predict_scores(restored, std::span<const EncodedDocument>(dev.docs), article), 0, 3);
  const bool tie_ok = select_best_epoch(std::vector<double>{0.3, 0.5, 0.5}) == 1;
  const bool restore_ok = report.best_epoch == expected_best && restored_qwk == qwks[expected_best] && tie_ok;

  std::ostringstream d;
  d << "fold partitions " << (splits_ok ? "exact" : "VIOLATED") << "; best epoch " << report.best_epoch
    << " (earliest argmax " << expected_best << "), restored dev QWK " << restored_qwk << " vs recorded "
    << qwks[expected_best] << "; tie rule " << (tie_ok ? "ok" : "wrong");
  return {splits_ok && restore_ok, d.str()};
}

// ---------------------------------------------------------------- 6

Outcome determinism_and_persistence() {
  testing::TempDir dir;
  std::mt19937_64 rng(7);
  RunConfig config;
  config.corpus = dir.write("corpus.tsv", testing::canonical_tsv(testing::synthetic_essays(25, rng)));
  config.article = dir.write("article.txt", testing::synthetic_article());
  config.min_score = 0;
  config.max_score = 3;
  config.model = testing::tiny_config();
  config.model.max_tokens = 10;
  config.train.epochs = 3;
  config.train.batch_size = 5;
  config.seed = 11;
  std::ostringstream sink;
  std::vector<std::string> summaries;
  for (std::size_t jobs : {1, 1, 3}) {
    config.jobs = jobs;
    config.output_dir = dir.path() / ("run" + std::to_string(summaries.size()));
    if (run_train(config, sink, sink) != kExitOk) return {false, "training run failed: " + sink.str()};
    summaries.push_back(testing::read_text(config.output_dir / "summary.json"));
  }
  const bool summaries_ok = !summaries[0].empty() && summaries[0] == summaries[1] && summaries[0] == summaries[2];

  // 32-bit save and load.
  const auto saved = load_checkpoint<float>(dir.path() / "run0" / "fold0.ckpt");
  const auto copy = dir.path() / "copy.ckpt";
  save_checkpoint(saved, copy);
  const auto loaded = load_checkpoint<float>(copy);
  std::vector<EncodedDocument> docs;
  for (const auto& r : testing::synthetic_essays(10, rng)) docs.push_back(encode_document(r.text, saved.vocab, saved.config));
  const auto article = encode_document(testing::synthetic_article(), saved.vocab, saved.config);
  const auto a = predict_scaled(saved, std::span<const EncodedDocument>(docs), article);
  const auto b = predict_scaled(loaded, std::span<const EncodedDocument>(docs), article);
  const bool bitwise = a == b && testing::read_text(copy) == testing::read_text(dir.path() / "run0" / "fold0.ckpt");

  std::ostringstream d;
  d << "summary files " << (summaries_ok ? "byte-identical" : "DIFFER") << " across 3 runs (" << summaries[0].size()
    << " bytes, 1 and 3 jobs); 32-bit checkpoint round trip " << (bitwise ? "bitwise identical" : "NOT identical");
  return {summaries_ok && bitwise, d.str()};
}

}  // namespace
}  // namespace coattn

int main() {
  using namespace coattn;
  struct Criterion {
    const char* name;
    Outcome (*run)();
  };
  const Criterion criteria[] = {
      {"gradient fidelity", gradient_fidelity},
      {"attention normalization", normalization_suite},
      {"qwk oracle equivalence", qwk_equivalence},
      {"learnability", learnability},
      {"protocol fidelity", protocol_fidelity},
      {"determinism and persistence", determinism_and_persistence},
  };
  int failed = 0;
  int index = 0;
  for (const Criterion& c : criteria) {
    ++index;
    Outcome outcome;
    try {
      outcome = c.run();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    if (!outcome.pass) ++failed;
    std::printf("%s  %d  %s: %s\n", outcome.pass ? "PASS" : "FAIL", index, c.name, outcome.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %d criteria passed\n", index - failed, index);
  return failed == 0 ? 0 : 1;
}
