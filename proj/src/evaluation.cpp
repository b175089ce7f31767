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

#include "coattn/evaluation.hpp"

#include <atomic>
#include <cstdio>
#include <exception>
#include <thread>

namespace coattn {

namespace {

// Re-raises the stored exception with the fold index prefixed, keeping its
// category so callers can still map it to an exit code.
[[noreturn]] void rethrow_for_fold(std::size_t fold, const std::exception_ptr& error) {
  const std::string prefix = "fold " + std::to_string(fold) + ": ";
  try {
    std::rethrow_exception(error);
  } catch (const ConfigError& e) {
    throw ConfigError(prefix + e.what());
  } catch (const ParseError& e) {
    throw ValidationError(prefix + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(prefix + e.what());
  } catch (const DegenerateInputError& e) {
    throw DegenerateInputError(prefix + e.what());
  } catch (const EncodingError& e) {
    throw EncodingError(prefix + e.what());
  } catch (const TrainingFailure& e) {
    throw TrainingFailure(prefix + e.what(), e.partial());
  } catch (const NumericError& e) {
    throw NumericError(prefix + e.what());
  } catch (const CheckpointError& e) {
    throw CheckpointError(e.kind(), prefix + e.what());
  } catch (const Error& e) {
    throw Error(prefix + e.what());
  }
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t fold, std::uint64_t purpose) {
  // splitmix64 over a mixed key.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (fold + 1) + 0xbf58476d1ce4e5b9ULL * (purpose + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

CvReport cross_validate_with(std::span<const EssayRecord> records, const std::string& article,
                             const ScoreScale& scale, std::size_t n_folds, std::uint64_t seed,
                             const FoldRunner& runner, std::size_t jobs) {
  scale.validate();
  const std::vector<FoldSplit> splits = make_folds(records.size(), n_folds, seed);
  std::vector<FoldOutcome> outcomes(n_folds);
  std::vector<std::exception_ptr> errors(n_folds);
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t f = next++; f < n_folds; f = next++) {
      try {
        FoldData data{f, records, &splits[f], &article};
        FoldPredictions result = runner(data);
        const FoldSplit& split = splits[f];
        if (result.test_predicted.size() != split.test.size()) {
          throw UsageError("fold runner returned " + std::to_string(result.test_predicted.size()) +
                           " predictions for " + std::to_string(split.test.size()) + " test essays");
        }
        FoldOutcome& out = outcomes[f];
        out.fold = f;
        out.train_size = split.train.size();
        out.dev_size = split.dev.size();
        out.test_size = split.test.size();
        out.train = std::move(result.train);
        out.test_predicted = std::move(result.test_predicted);
        for (std::size_t idx : split.test) {
          out.test_ids.push_back(records[idx].essay_id);
          out.test_gold.push_back(records[idx].score);
        }
        out.test_qwk = qwk(out.test_gold, out.test_predicted, scale.min_score, scale.max_score);
      } catch (...) {
        errors[f] = std::current_exception();
      }
    }
  };

  const std::size_t threads = std::max<std::size_t>(1, std::min(jobs, n_folds));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (std::size_t f = 0; f < n_folds; ++f) {
    if (errors[f]) rethrow_for_fold(f, errors[f]);
  }

  CvReport report;
  report.folds = std::move(outcomes);
  double total = 0.0;
  for (const FoldOutcome& f : report.folds) total += f.test_qwk;
  report.mean_test_qwk = total / static_cast<double>(n_folds);
  return report;
}

template <typename T>
CvReport cross_validate(std::span<const EssayRecord> records, const std::string& article, const ScoreScale& scale,
                        const CvOptions& options) {
  options.model.validate();
  FoldRunner runner = [&](const FoldData& data) {
    const FoldSplit& split = *data.split;
    std::vector<EssayRecord> train_records;
    for (std::size_t idx : split.train) train_records.push_back(records[idx]);

    EssayScorer<T> scorer;
    scorer.config = options.model;
    scorer.scale = scale;
    scorer.vocab = build_vocab(train_records, article, options.model.vocab_size);
    std::mt19937_64 init_rng(derive_seed(options.seed, data.fold, 0));
    scorer.params = ModelParams<T>::glorot(options.model, scorer.vocab.size(), init_rng);
    if (options.embeddings) {
      std::mt19937_64 embed_rng(derive_seed(options.seed, data.fold, 1));
      const EmbeddingLoad loaded = load_embeddings(*options.embeddings, scorer.vocab, options.model.embed_dim, embed_rng);
      const bool trainable = scorer.params.embedding.requires_grad();
      scorer.params.embedding = loaded.matrix.template cast<T>();
      scorer.params.embedding.set_requires_grad(trainable);
    }

    const EncodedDocument article_doc = encode_document(article, scorer.vocab, options.model);
    const EncodedSet train = encode_set(records, split.train, scorer.vocab, options.model, scale);
    const EncodedSet dev = encode_set(records, split.dev, scorer.vocab, options.model, scale);
    const EncodedSet test = encode_set(records, split.test, scorer.vocab, options.model, scale);

    FitOptions fit;
    fit.train = options.train;
    fit.seed = derive_seed(options.seed, data.fold, 2);
    if (options.checkpoint_dir) {
      fit.checkpoint_path = *options.checkpoint_dir / ("fold" + std::to_string(data.fold) + ".ckpt");
    }
    if (options.on_epoch) {
      fit.on_epoch = [&options, fold = data.fold](const EpochLog& log) { options.on_epoch(fold, log); };
    }
    FoldPredictions out;
    out.train = fit_with_selection(scorer, train, dev, article_doc, fit);
    out.test_predicted = predict_scores(scorer, std::span<const EncodedDocument>(test.docs), article_doc);
    return out;
  };
  return cross_validate_with(records, article, scale, options.n_folds, options.seed, runner, options.jobs);
}

template <typename T>
std::vector<AttentionReportRow> attention_report(const EssayScorer<T>& scorer, const std::string& essay_text,
                                                 const std::string& article_text) {
  const EncodedDocument essay = encode_document(essay_text, scorer.vocab, scorer.config);
  const EncodedDocument article = encode_document(article_text, scorer.vocab, scorer.config);
  Tape<T> tape;
  ParamVars<T> vars = bind(tape, scorer.params);
  const ForwardTrace<T> trace = forward_full(tape, vars, essay, article, scorer.config);
  const Tensor<T>& weights = trace.article_to_essay.value();
  std::vector<AttentionReportRow> rows;
  for (std::size_t s = 0; s < essay.num_sentences(); ++s) {
    rows.push_back({s + 1, essay.sentences[s], static_cast<double>(weights[s])});
  }
  return rows;
}

std::string format_attention_table(std::span<const AttentionReportRow> rows) {
  std::string out = "No.\tSentence\tAttention\n";
  char buf[32];
  for (const AttentionReportRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.5f", r.attention);
    std::string sentence = r.sentence;
    for (char& c : sentence) {
      if (c == '\t' || c == '\n' || c == '\r') c = ' ';
    }
    out += std::to_string(r.index) + "\t" + sentence + "\t" + buf + "\n";
  }
  return out;
}

template CvReport cross_validate<float>(std::span<const EssayRecord>, const std::string&, const ScoreScale&,
                                        const CvOptions&);
template CvReport cross_validate<double>(std::span<const EssayRecord>, const std::string&, const ScoreScale&,
                                         const CvOptions&);
template std::vector<AttentionReportRow> attention_report(const EssayScorer<float>&, const std::string&,
                                                          const std::string&);
template std::vector<AttentionReportRow> attention_report(const EssayScorer<double>&, const std::string&,
                                                          const std::string&);

}  // namespace coattn
