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

#include "coattn/app.hpp"

#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>

#include <json.hpp>

namespace coattn {

namespace {

using Json = nlohmann::ordered_json;

void require_file(const std::filesystem::path& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string(what) + " path is not set");
  if (!std::filesystem::is_regular_file(path)) {
    throw ConfigError(std::string(what) + " not found: " + path.string());
  }
}

bool checkpoint_is_double(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::string header, dtype_line;
  std::getline(in, header);
  std::getline(in, dtype_line);
  return dtype_line == "dtype double";
}

Json model_json(const ModelConfig& m) {
  return Json{{"embed_dim", m.embed_dim},
              {"kernel", m.kernel},
              {"conv_filters", m.conv_filters},
              {"lstm_hidden", m.lstm_hidden},
              {"modeling_hidden", m.modeling_hidden},
              {"dropout", m.dropout},
              {"vocab_size", m.vocab_size},
              {"max_sentences", m.max_sentences},
              {"max_tokens", m.max_tokens},
              {"conv_activation", to_string(m.conv_activation)},
              {"train_embeddings", m.train_embeddings}};
}

template <typename T>
int train_impl(const RunConfig& config, std::ostream& out) {
  const ScoreScale scale = config.score_scale();
  CorpusOptions corpus_options;
  corpus_options.format = parse_corpus_format(config.corpus_format);
  corpus_options.prompt_id = config.prompt;
  if (config.min_score || config.max_score) corpus_options.scale = scale;
  const std::vector<EssayRecord> records = load_corpus(config.corpus, corpus_options);
  if (records.empty()) throw ValidationError("corpus " + config.corpus.string() + " has no matching essays");
  const std::string article = read_text_file(config.article);

  std::filesystem::create_directories(config.output_dir);
  std::ofstream log(config.output_dir / "train.log", std::ios::app);
  if (!log) throw ConfigError("cannot write to output directory " + config.output_dir.string());
  std::mutex log_mutex;

  CvOptions cv;
  cv.model = config.model;
  cv.train = config.train;
  cv.n_folds = config.folds;
  cv.seed = config.seed;
  cv.jobs = config.jobs;
  cv.embeddings = config.embeddings;
  cv.checkpoint_dir = config.output_dir;
  cv.on_epoch = [&](std::size_t fold, const EpochLog& e) {
    std::lock_guard lock(log_mutex);
    log << "fold=" << fold << "\tepoch=" << e.epoch << "\ttrain_loss=" << e.train_loss << "\tdev_qwk=" << e.dev_qwk
        << '\n';
    log.flush();
  };
  const CvReport report = cross_validate<T>(records, article, scale, cv);

  {
    std::ofstream summary(config.output_dir / "summary.json", std::ios::trunc);
    summary << summary_json(report, config);
  }
  {
    std::ofstream preds(config.output_dir / "predictions.tsv", std::ios::trunc);
    preds << "fold\tessay_id\tgold\tpredicted\n";
    for (const FoldOutcome& f : report.folds) {
      for (std::size_t i = 0; i < f.test_ids.size(); ++i) {
        preds << f.fold << '\t' << f.test_ids[i] << '\t' << f.test_gold[i] << '\t' << f.test_predicted[i] << '\n';
      }
    }
  }
  for (const FoldOutcome& f : report.folds) {
    out << "fold " << f.fold << "\tbest_epoch=" << f.train.best_epoch << "\tdev_qwk=" << f.train.best_dev_qwk
        << "\ttest_qwk=" << f.test_qwk << '\n';
  }
  out << "mean_test_qwk=" << report.mean_test_qwk << '\n';
  return kExitOk;
}

template <typename T>
int score_impl(const RunConfig& config, std::ostream& out) {
  const EssayScorer<T> scorer = load_checkpoint<T>(config.checkpoint);
  const EncodedDocument essay = encode_document(read_text_file(config.essay), scorer.vocab, scorer.config);
  const EncodedDocument article = encode_document(read_text_file(config.article), scorer.vocab, scorer.config);
  const double y = static_cast<double>(predict(scorer.params, essay, article, scorer.config));
  out << unscale_score(y, scorer.scale) << '\n';
  return kExitOk;
}

template <typename T>
int attend_impl(const RunConfig& config, std::ostream& out) {
  const EssayScorer<T> scorer = load_checkpoint<T>(config.checkpoint);
  const auto rows = attention_report(scorer, read_text_file(config.essay), read_text_file(config.article));
  out << format_attention_table(rows);
  return kExitOk;
}

template <typename T>
int evaluate_impl(const RunConfig& config, std::ostream& out) {
  const EssayScorer<T> scorer = load_checkpoint<T>(config.checkpoint);
  CorpusOptions corpus_options;
  corpus_options.format = parse_corpus_format(config.corpus_format);
  corpus_options.prompt_id = config.prompt;
  corpus_options.scale = scorer.scale;
  const std::vector<EssayRecord> records = load_corpus(config.corpus, corpus_options);
  if (records.empty()) throw ValidationError("corpus " + config.corpus.string() + " has no matching essays");
  std::vector<std::size_t> all(records.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const EncodedSet set = encode_set(records, all, scorer.vocab, scorer.config, scorer.scale);
  const EncodedDocument article = encode_document(read_text_file(config.article), scorer.vocab, scorer.config);
  const std::vector<int> predicted = predict_scores(scorer, std::span<const EncodedDocument>(set.docs), article);
  out << "essays=" << records.size() << "\tqwk="
      << qwk(set.scores, predicted, scorer.scale.min_score, scorer.scale.max_score) << '\n';
  return kExitOk;
}

std::vector<double> fold_qwks(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("summary not found: " + path.string());
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("cannot parse summary " + path.string() + ": " + e.what());
  }
  std::vector<double> out;
  if (!doc.contains("folds") || !doc["folds"].is_array()) {
    throw ValidationError("summary " + path.string() + " has no folds array");
  }
  for (const auto& f : doc["folds"]) out.push_back(f.at("test_qwk").get<double>());
  return out;
}

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    return report_error(e, err);
  }
}

}  // namespace

FloatMode parse_float_mode(const std::string& name) {
  if (name == "float" || name == "float32" || name == "32") return FloatMode::kFloat32;
  if (name == "double" || name == "float64" || name == "64") return FloatMode::kFloat64;
  throw ConfigError("unknown float mode '" + name + "' (expected float or double)");
}

void RunConfig::validate_for_train() const {
  require_file(corpus, "corpus");
  require_file(article, "article");
  if (embeddings) require_file(*embeddings, "embeddings");
  if (output_dir.empty()) throw ConfigError("output directory is not set");
  if (train.epochs == 0) throw ConfigError("epochs must be positive");
  if (train.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (folds < 3) throw ConfigError("folds must be at least 3");
  model.validate();
  score_scale();
}

ScoreScale RunConfig::score_scale() const {
  if (min_score.has_value() != max_score.has_value()) throw ConfigError("set both min_score and max_score");
  if (min_score) {
    ScoreScale s{*min_score, *max_score};
    if (s.max_score <= s.min_score) throw ConfigError("max_score must exceed min_score");
    return s;
  }
  if (corpus_format == "asap" || corpus_format == "asap_tsv") {
    if (!prompt) throw ConfigError("ASAP corpora need a prompt (essay_set) or an explicit score range");
    if (auto range = asap_score_range(*prompt)) return *range;
    throw ConfigError("no known score range for ASAP prompt " + *prompt);
  }
  throw ConfigError("score range is not set (min_score / max_score)");
}

int report_error(const std::exception& error, std::ostream& err) {
  int code = kExitFailure;
  const char* category = "error";
  if (dynamic_cast<const ConfigError*>(&error) || dynamic_cast<const UsageError*>(&error)) {
    code = kExitConfig;
    category = "config error";
  } else if (dynamic_cast<const NumericError*>(&error)) {
    code = kExitNumeric;
    category = "numeric error";
  } else if (dynamic_cast<const ValidationError*>(&error) || dynamic_cast<const ParseError*>(&error) ||
             dynamic_cast<const EncodingError*>(&error) || dynamic_cast<const DegenerateInputError*>(&error) ||
             dynamic_cast<const CheckpointError*>(&error) || dynamic_cast<const DimensionError*>(&error)) {
    code = kExitData;
    category = "data error";
  } else if (dynamic_cast<const std::filesystem::filesystem_error*>(&error)) {
    code = kExitConfig;
    category = "io error";
  }
  err << "coattn: " << category << ": " << error.what() << '\n';
  return code;
}

std::string summary_json(const CvReport& report, const RunConfig& config) {
  Json folds = Json::array();
  for (const FoldOutcome& f : report.folds) {
    Json epochs = Json::array();
    for (const EpochLog& e : f.train.epochs) {
      epochs.push_back(Json{{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"dev_qwk", e.dev_qwk}});
    }
    folds.push_back(Json{{"fold", f.fold},
                         {"train_size", f.train_size},
                         {"dev_size", f.dev_size},
                         {"test_size", f.test_size},
                         {"best_epoch", f.train.best_epoch},
                         {"best_dev_qwk", f.train.best_dev_qwk},
                         {"test_qwk", f.test_qwk},
                         {"epochs", std::move(epochs)}});
  }
  const ScoreScale scale = config.score_scale();
  Json doc{{"format", "coattn-summary"},
           {"version", 1},
           {"seed", config.seed},
           {"float_mode", config.float_mode == FloatMode::kFloat32 ? "float" : "double"},
           {"score_range", Json::array({scale.min_score, scale.max_score})},
           {"model", model_json(config.model)},
           {"training",
            Json{{"epochs", config.train.epochs},
                 {"batch_size", config.train.batch_size},
                 {"learning_rate", config.train.optimizer.learning_rate},
                 {"momentum", config.train.optimizer.momentum},
                 {"decay", config.train.optimizer.decay},
                 {"epsilon", config.train.optimizer.epsilon},
                 {"clip", config.train.optimizer.clip},
                 {"clip_norm", config.train.optimizer.clip_norm}}},
           {"folds", std::move(folds)},
           {"mean_test_qwk", report.mean_test_qwk}};
  return doc.dump(2) + "\n";
}

int run_train(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    config.validate_for_train();
    return config.float_mode == FloatMode::kFloat32 ? train_impl<float>(config, out)
                                                    : train_impl<double>(config, out);
  });
}

int run_score(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    require_file(config.checkpoint, "checkpoint");
    require_file(config.essay, "essay");
    require_file(config.article, "article");
    return checkpoint_is_double(config.checkpoint) ? score_impl<double>(config, out) : score_impl<float>(config, out);
  });
}

int run_attend(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    require_file(config.checkpoint, "checkpoint");
    require_file(config.essay, "essay");
    require_file(config.article, "article");
    return checkpoint_is_double(config.checkpoint) ? attend_impl<double>(config, out)
                                                   : attend_impl<float>(config, out);
  });
}

int run_evaluate(const RunConfig& config, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    require_file(config.checkpoint, "checkpoint");
    require_file(config.corpus, "corpus");
    require_file(config.article, "article");
    return checkpoint_is_double(config.checkpoint) ? evaluate_impl<double>(config, out)
                                                   : evaluate_impl<float>(config, out);
  });
}

int run_compare(const std::filesystem::path& a, const std::filesystem::path& b, std::ostream& out,
                std::ostream& err) {
  return guarded(err, [&] {
    const auto qa = fold_qwks(a);
    const auto qb = fold_qwks(b);
    const TTestResult t = paired_t_test(qa, qb);
    double mean_a = 0, mean_b = 0;
    for (double v : qa) mean_a += v;
    for (double v : qb) mean_b += v;
    mean_a /= static_cast<double>(qa.size());
    mean_b /= static_cast<double>(qb.size());
    out << "mean_a=" << mean_a << "\tmean_b=" << mean_b << "\tt=" << t.t << "\tp=" << t.p << "\tdof=" << t.dof
        << "\tsignificant=" << (t.p < 0.05 ? "yes" : "no");
    if (t.no_difference) out << "\tflag=no_difference";
    if (t.diverged) out << "\tflag=zero_variance";
    out << '\n';
    return kExitOk;
  });
}

}  // namespace coattn
