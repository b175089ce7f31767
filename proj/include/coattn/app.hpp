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

#ifndef COATTN_APP_HPP
#define COATTN_APP_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "coattn/evaluation.hpp"

namespace coattn {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitNumeric = 4,
};

enum class FloatMode { kFloat32, kFloat64 };

FloatMode parse_float_mode(const std::string& name);

struct RunConfig {
  std::filesystem::path corpus;
  std::string corpus_format = "canonical";
  std::optional<std::string> prompt;
  std::filesystem::path article;
  std::optional<std::filesystem::path> embeddings;
  std::filesystem::path output_dir = "coattn-out";
  std::optional<int> min_score;
  std::optional<int> max_score;

  ModelConfig model;
  TrainOptions train;
  std::size_t folds = 5;
  std::size_t jobs = 1;
  std::uint64_t seed = 1;
  FloatMode float_mode = FloatMode::kFloat32;

  // Scoring-time inputs.
  std::filesystem::path checkpoint;
  std::filesystem::path essay;

  // Throws ConfigError naming the first missing path or bad value.
  void validate_for_train() const;
  ScoreScale score_scale() const;
};

// Maps a library exception to its exit code and writes the message.
int report_error(const std::exception& error, std::ostream& err);

int run_train(const RunConfig& config, std::ostream& out, std::ostream& err);
int run_score(const RunConfig& config, std::ostream& out, std::ostream& err);
int run_attend(const RunConfig& config, std::ostream& out, std::ostream& err);
// QWK of a checkpoint over a corpus file.
int run_evaluate(const RunConfig& config, std::ostream& out, std::ostream& err);
// Paired t-test over the per-fold test QWKs of two summary files.
int run_compare(const std::filesystem::path& a, const std::filesystem::path& b, std::ostream& out,
                std::ostream& err);

// Summary document written by run_train; deterministic for a given run.
std::string summary_json(const CvReport& report, const RunConfig& config);

}  // namespace coattn

#endif  // COATTN_APP_HPP
