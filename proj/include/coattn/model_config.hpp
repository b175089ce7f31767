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

#ifndef COATTN_MODEL_CONFIG_HPP
#define COATTN_MODEL_CONFIG_HPP

#include <cstddef>
#include <string>

namespace coattn {

enum class Activation { kRelu, kTanh };

std::string to_string(Activation act);
Activation parse_activation(const std::string& name);

// Defaults are the published training hyper-parameters.
struct ModelConfig {
  std::size_t embed_dim = 50;
  std::size_t kernel = 5;
  std::size_t conv_filters = 100;
  std::size_t lstm_hidden = 100;
  std::size_t modeling_hidden = 100;
  double dropout = 0.5;
  std::size_t vocab_size = 4000;  // cap, including PAD and UNK
  std::size_t max_sentences = 100;
  std::size_t max_tokens = 50;
  Activation conv_activation = Activation::kRelu;
  bool train_embeddings = true;

  // Throws ConfigError on a non-positive size, a dropout outside [0, 1) or
  // max_tokens < kernel.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

}  // namespace coattn

#endif  // COATTN_MODEL_CONFIG_HPP
