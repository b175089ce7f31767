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

// coattn: train, score and inspect the co-attention essay scorer.
//
//   coattn train    --config run.cfg
//   coattn score    --checkpoint out/fold0.ckpt --essay e.txt --article a.txt
//   coattn attend   --checkpoint out/fold0.ckpt --essay e.txt --article a.txt
//   coattn evaluate --checkpoint out/fold0.ckpt --corpus c.tsv --article a.txt
//   coattn evaluate --compare a/summary.json b/summary.json
//
// Every flag may also appear as `key = value` in the --config file; flags on
// the command line win. COATTN_OUTPUT_DIR overrides the output directory.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "coattn/app.hpp"

int main(int argc, char** argv) {
  coattn::RunConfig config;
  CLI::App app{"Co-attention neural essay scoring"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "Flat key = value run configuration");

  std::string corpus, article, embeddings, output_dir = config.output_dir.string(), checkpoint, essay;
  std::string prompt, float_mode = "float", activation = "relu";
  int min_score = 0, max_score = 0;
  bool no_clip = false, freeze_embeddings = false;

  app.add_option("--corpus", corpus, "Corpus TSV");
  app.add_option("--format", config.corpus_format, "Corpus format: canonical or asap")->capture_default_str();
  app.add_option("--prompt", prompt, "Keep only this prompt id (ASAP essay_set)");
  app.add_option("--article", article, "Source article text file");
  app.add_option("--embeddings", embeddings, "Pretrained embeddings, token + values per line");
  app.add_option("--output-dir", output_dir, "Directory for checkpoints, logs and summary")
      ->envname("COATTN_OUTPUT_DIR")
      ->capture_default_str();
  auto* min_opt = app.add_option("--min-score", min_score, "Lowest score of the prompt");
  auto* max_opt = app.add_option("--max-score", max_score, "Highest score of the prompt");
  app.add_option("--checkpoint", checkpoint, "Checkpoint file");
  app.add_option("--essay", essay, "Essay text file");

  app.add_option("--embed-dim", config.model.embed_dim)->capture_default_str();
  app.add_option("--kernel", config.model.kernel)->capture_default_str();
  app.add_option("--conv-filters", config.model.conv_filters)->capture_default_str();
  app.add_option("--lstm-hidden", config.model.lstm_hidden)->capture_default_str();
  app.add_option("--modeling-hidden", config.model.modeling_hidden)->capture_default_str();
  app.add_option("--dropout", config.model.dropout)->capture_default_str();
  app.add_option("--vocab-size", config.model.vocab_size)->capture_default_str();
  app.add_option("--max-sentences", config.model.max_sentences)->capture_default_str();
  app.add_option("--max-tokens", config.model.max_tokens)->capture_default_str();
  app.add_option("--conv-activation", activation, "relu or tanh")->capture_default_str();
  app.add_flag("--freeze-embeddings", freeze_embeddings, "Keep embeddings fixed during training");

  app.add_option("--epochs", config.train.epochs)->capture_default_str();
  app.add_option("--batch-size", config.train.batch_size)->capture_default_str();
  app.add_option("--learning-rate", config.train.optimizer.learning_rate)->capture_default_str();
  app.add_option("--momentum", config.train.optimizer.momentum)->capture_default_str();
  app.add_option("--decay", config.train.optimizer.decay)->capture_default_str();
  app.add_option("--epsilon", config.train.optimizer.epsilon)->capture_default_str();
  app.add_flag("--no-clip", no_clip, "Disable global gradient-norm clipping");
  app.add_option("--clip-norm", config.train.optimizer.clip_norm)->capture_default_str();
  app.add_option("--folds", config.folds)->capture_default_str();
  app.add_option("--jobs", config.jobs, "Folds trained in parallel")->capture_default_str();
  app.add_option("--seed", config.seed)->capture_default_str();
  app.add_option("--float-mode", float_mode, "float or double")->capture_default_str();

  auto* train = app.add_subcommand("train", "Cross-validated training; writes checkpoints, log and summary");
  auto* score = app.add_subcommand("score", "Print the integer score of one essay");
  auto* attend = app.add_subcommand("attend", "Print per-sentence article-to-essay attention");
  auto* evaluate = app.add_subcommand("evaluate", "QWK of a checkpoint on a corpus, or compare two summaries");
  std::vector<std::string> compare;
  evaluate->add_option("--compare", compare, "Two summary.json files for a paired t-test")->expected(2);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : coattn::kExitConfig;
  }

  try {
    config.corpus = corpus;
    config.article = article;
    config.output_dir = output_dir;
    config.checkpoint = checkpoint;
    config.essay = essay;
    if (!embeddings.empty()) config.embeddings = embeddings;
    if (!prompt.empty()) config.prompt = prompt;
    if (min_opt->count() || max_opt->count()) {
      config.min_score = min_score;
      config.max_score = max_score;
      if (!min_opt->count() || !max_opt->count()) throw coattn::ConfigError("set both --min-score and --max-score");
    }
    config.model.conv_activation = coattn::parse_activation(activation);
    config.model.train_embeddings = !freeze_embeddings;
    config.train.optimizer.clip = !no_clip;
    config.float_mode = coattn::parse_float_mode(float_mode);
  } catch (const std::exception& e) {
    return coattn::report_error(e, std::cerr);
  }

  if (train->parsed()) return coattn::run_train(config, std::cout, std::cerr);
  if (score->parsed()) return coattn::run_score(config, std::cout, std::cerr);
  if (attend->parsed()) return coattn::run_attend(config, std::cout, std::cerr);
  if (evaluate->parsed()) {
    if (!compare.empty()) return coattn::run_compare(compare[0], compare[1], std::cout, std::cerr);
    return coattn::run_evaluate(config, std::cout, std::cerr);
  }
  return coattn::kExitConfig;
}
