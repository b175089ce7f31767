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

#ifndef COATTN_MODEL_HPP
#define COATTN_MODEL_HPP

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "coattn/autograd.hpp"
#include "coattn/document.hpp"
#include "coattn/model_config.hpp"

namespace coattn {

// Gate weights act on the row vector [h_{t-1}, x_t], so each W is
// (hidden + input) x hidden.
template <typename T>
struct LstmParams {
  Tensor<T> w_forget, w_input, w_cell, w_output;
  Tensor<T> b_forget, b_input, b_cell, b_output;
};

template <typename T>
struct ModelParams {
  Tensor<T> embedding;  // vocab_rows x embed_dim
  Tensor<T> conv_w;     // kernel*embed_dim x conv_filters
  Tensor<T> conv_b;
  Tensor<T> pool_w;  // conv_filters x conv_filters
  Tensor<T> pool_b;
  Tensor<T> pool_v;  // conv_filters
  LstmParams<T> sentence_lstm;
  Tensor<T> sim_w;  // 3 * lstm_hidden
  Tensor<T> sim_b;  // [1]
  LstmParams<T> modeling_lstm;
  Tensor<T> out_w;  // modeling_hidden
  Tensor<T> out_b;  // [1]

  // Glorot-uniform weights, zero biases, embedding rows uniform in
  // [-0.05, 0.05] with the PAD row zeroed.
  static ModelParams glorot(const ModelConfig& config, std::size_t vocab_rows, std::mt19937_64& rng);
  static ModelParams zeros(const ModelConfig& config, std::size_t vocab_rows);

  // Stable, unique names in a fixed order; used by the optimizer and the
  // checkpoint format.
  std::vector<std::pair<std::string, Tensor<T>*>> named();
  std::vector<std::pair<std::string, const Tensor<T>*>> named() const;

  std::size_t vocab_rows() const { return embedding.dim(0); }
  void zero_grad();

  template <typename U>
  ModelParams<U> cast() const;
};

// Expected shape of every parameter under `config`, keyed by name.
std::vector<std::pair<std::string, Shape>> parameter_shapes(const ModelConfig& config, std::size_t vocab_rows);

template <typename T>
struct LstmVars {
  Var<T> w_forget, w_input, w_cell, w_output;
  Var<T> b_forget, b_input, b_cell, b_output;
};

// Leaves of every parameter on one tape.
template <typename T>
struct ParamVars {
  Var<T> embedding, conv_w, conv_b, pool_w, pool_b, pool_v;
  LstmVars<T> sentence_lstm;
  Var<T> sim_w, sim_b;
  LstmVars<T> modeling_lstm;
  Var<T> out_w, out_b;
};

template <typename T>
ParamVars<T> bind(Tape<T>& tape, ModelParams<T>& params);

// Gradient-free binding for inference.
template <typename T>
ParamVars<T> bind(Tape<T>& tape, const ModelParams<T>& params);

// Which part of the padded grid the layers run over. Trimming drops the
// trailing padded sentences and the padded columns past the longest real
// sentence; both are masked everywhere, so the result is unchanged.
struct DocumentExtent {
  std::size_t sentences = 0;
  std::size_t tokens = 0;
  std::vector<std::int32_t> ids;           // sentences * tokens
  std::vector<std::uint8_t> sentence_mask;  // sentences
  std::vector<std::uint8_t> window_mask;    // sentences * (tokens - kernel + 1)
};

DocumentExtent document_extent(const EncodedDocument& doc, bool trim);

// Optional inverted dropout for the embedding output.
struct Dropout {
  double rate = 0.0;
  std::mt19937_64* rng = nullptr;
  bool active() const { return rng != nullptr && rate > 0.0; }
};

template <typename T>
Var<T> embed_lookup(const DocumentExtent& doc, Var<T> embedding, const Dropout& dropout);

template <typename T>
Var<T> conv_sentence(Var<T> embedded, Var<T> weight, Var<T> bias, std::size_t kernel, Activation act);

// Attention pooling over convolution windows. Writes the window weights to
// *weights when given.
template <typename T>
Var<T> attention_pool(Var<T> windows, std::span<const std::uint8_t> window_mask, Var<T> weight, Var<T> bias,
                      Var<T> context, Var<T>* weights = nullptr);

// Runs the LSTM over the rows of inputs. A step whose mask entry is zero
// carries the previous h and c forward unchanged. h0 and c0 (1 x hidden)
// default to zeros when left invalid.
template <typename T>
Var<T> lstm_forward(Var<T> inputs, const LstmVars<T>& lstm, std::span<const std::uint8_t> step_mask, Var<T> h0 = {},
                    Var<T> c0 = {});

// Similarity between essay and article sentences; pairs touching a padded
// sentence are set to -1e9.
template <typename T>
Var<T> similarity_matrix(Var<T> essay, Var<T> article, Var<T> weight, Var<T> bias,
                         std::span<const std::uint8_t> essay_mask, std::span<const std::uint8_t> article_mask);

template <typename T>
struct EssayToArticle {
  Var<T> weights;   // S_e x S_a
  Var<T> attended;  // S_e x d_H
};

template <typename T>
EssayToArticle<T> essay_to_article(Var<T> sim, Var<T> article, std::span<const std::uint8_t> article_mask);

template <typename T>
struct ArticleToEssay {
  Var<T> weights;   // [S_e]
  Var<T> summary;   // 1 x d_H
  Var<T> attended;  // S_e x d_H, summary tiled
};

template <typename T>
ArticleToEssay<T> article_to_essay(Var<T> sim, Var<T> essay, std::span<const std::uint8_t> essay_mask,
                                   std::span<const std::uint8_t> article_mask);

// [H_e, H~_a, H_e * H~_a, H_e * H~_e] along the feature axis.
template <typename T>
Var<T> fuse(Var<T> essay, Var<T> attended_article, Var<T> attended_essay);

// Shared sentence encoder output for one document.
template <typename T>
struct EncodedSide {
  DocumentExtent extent;
  Var<T> embedded;        // S x W x d_L
  Var<T> windows;         // S x P x d_C
  Var<T> window_weights;  // S x P
  Var<T> sentences;       // S x d_C
  Var<T> hidden;          // S x d_H
};

template <typename T>
EncodedSide<T> encode_document_side(const ParamVars<T>& params, const EncodedDocument& doc, const ModelConfig& config,
                                    const Dropout& dropout, bool trim = true);

template <typename T>
struct ForwardTrace {
  EncodedSide<T> essay;
  EncodedSide<T> article;
  Var<T> sim;
  Var<T> essay_to_article;    // a_ea
  Var<T> attended_article;    // H~_a
  Var<T> article_to_essay;    // a_ae
  Var<T> essay_summary;       // h~_e
  Var<T> attended_essay;      // H~_e
  Var<T> fused;               // G
  Var<T> modeled;             // M, 1 x d_M
  Var<T> score;               // y, [1]
};

// Co-attention, modeling LSTM and output head over already encoded sides.
template <typename T>
ForwardTrace<T> score_pair(const ParamVars<T>& params, EncodedSide<T> essay, EncodedSide<T> article);

template <typename T>
ForwardTrace<T> forward_full(Tape<T>& tape, const ParamVars<T>& params, const EncodedDocument& essay,
                             const EncodedDocument& article, const ModelConfig& config, const Dropout& dropout = {},
                             bool trim = true);

// Eval-mode prediction y in (0, 1) on a private tape.
template <typename T>
T predict(const ModelParams<T>& params, const EncodedDocument& essay, const EncodedDocument& article,
          const ModelConfig& config);

}  // namespace coattn

#endif  // COATTN_MODEL_HPP
