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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <type_traits>
#include <vector>

#include <gtest/gtest.h>

#include "coattn/grad_check.hpp"
#include "coattn/model.hpp"
#include "test_support.hpp"

namespace coattn {
namespace {

using testing::random_document;
using testing::random_tensor;
using testing::tiny_config;

std::vector<std::uint8_t> ones(std::size_t n) { return std::vector<std::uint8_t>(n, 1); }

template <typename T>
std::vector<T> values(const Tensor<T>& t) {
  return {t.data().begin(), t.data().end()};
}

LstmParams<double> zero_lstm(std::size_t in, std::size_t hidden) {
  LstmParams<double> p;
  for (Tensor<double>* w : {&p.w_forget, &p.w_input, &p.w_cell, &p.w_output}) *w = Tensor<double>({hidden + in, hidden});
  for (Tensor<double>* b : {&p.b_forget, &p.b_input, &p.b_cell, &p.b_output}) *b = Tensor<double>({hidden});
  return p;
}

LstmVars<double> bind_lstm(Tape<double>& tape, LstmParams<double>& p) {
  return {tape.leaf(p.w_forget), tape.leaf(p.w_input), tape.leaf(p.w_cell), tape.leaf(p.w_output),
          tape.leaf(p.b_forget), tape.leaf(p.b_input), tape.leaf(p.b_cell), tape.leaf(p.b_output)};
}

TEST(ModelConfig, DefaultsMatchPublishedHyperParameters) {
  const ModelConfig c;
  EXPECT_EQ(c.embed_dim, 50u);
  EXPECT_EQ(c.kernel, 5u);
  EXPECT_EQ(c.conv_filters, 100u);
  EXPECT_EQ(c.lstm_hidden, 100u);
  EXPECT_EQ(c.modeling_hidden, 100u);
  EXPECT_EQ(c.dropout, 0.5);
  EXPECT_EQ(c.vocab_size, 4000u);
  EXPECT_NO_THROW(c.validate());
  ModelConfig bad = c;
  bad.dropout = 1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  bad.lstm_hidden = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = c;
  bad.max_tokens = 4;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(ModelParams, ShapesAndInit) {
  const ModelConfig c;
  std::mt19937_64 rng(1);
  auto params = ModelParams<float>::glorot(c, 123, rng);
  const auto shapes = parameter_shapes(c, 123);
  const auto named = params.named();
  ASSERT_EQ(named.size(), shapes.size());
  for (std::size_t i = 0; i < named.size(); ++i) {
    EXPECT_EQ(named[i].first, shapes[i].first);
    EXPECT_EQ(named[i].second->shape(), shapes[i].second) << named[i].first;
    EXPECT_TRUE(named[i].second->requires_grad());
  }
  EXPECT_EQ(params.conv_w.shape(), (Shape{250, 100}));
  EXPECT_EQ(params.sentence_lstm.w_forget.shape(), (Shape{200, 100}));
  EXPECT_EQ(params.modeling_lstm.w_forget.shape(), (Shape{500, 100}));
  EXPECT_EQ(params.sim_w.shape(), (Shape{300}));
  for (std::size_t j = 0; j < c.embed_dim; ++j) EXPECT_EQ(params.embedding.at(0, j), 0.0f);
  for (float v : params.conv_b.data()) EXPECT_EQ(v, 0.0f);
  const float limit = std::sqrt(6.0f / 350.0f);
  for (float v : params.conv_w.data()) EXPECT_LE(std::abs(v), limit);
  for (float v : params.embedding.data()) EXPECT_LE(std::abs(v), 0.05f);

  ModelConfig frozen = c;
  frozen.train_embeddings = false;
  EXPECT_FALSE(ModelParams<float>::zeros(frozen, 10).embedding.requires_grad());
}

// ---------------------------------------------------------------- embedding

TEST(EmbedLookup, ZeroRowAndPadding) {
  ModelConfig c = tiny_config();
  std::mt19937_64 rng(3);
  EncodedDocument doc = random_document(c, 10, 2, rng);
  Tensor<double> table = random_tensor({10, c.embed_dim}, rng);
  const std::int32_t first = doc.id(0, 0);
  for (std::size_t j = 0; j < c.embed_dim; ++j) table.at(first, j) = 0.0;
  Tape<double> tape;
  const DocumentExtent ext = document_extent(doc, false);
  auto out = embed_lookup(ext, tape.view(table), Dropout{});
  for (std::size_t j = 0; j < c.embed_dim; ++j) EXPECT_EQ(out.value().at(0, 0, j), 0.0);
  for (std::size_t s = 0; s < ext.sentences; ++s) {
    for (std::size_t w = 0; w < ext.tokens; ++w) {
      if (ext.ids[s * ext.tokens + w] != kPadId) continue;
      for (std::size_t j = 0; j < c.embed_dim; ++j) EXPECT_EQ(out.value().at(s, w, j), 0.0);
    }
  }
}

// Inverted dropout keeps the expectation: the mean of the summed train-mode
// output over many draws must sit within 3 standard errors of the eval sum.
TEST(EmbedLookup, DropoutMatchesEvalInExpectation) {
  ModelConfig c = tiny_config();
  std::mt19937_64 rng(8);
  EncodedDocument doc = random_document(c, 12, 2, rng);
  Tensor<double> table = random_tensor({12, c.embed_dim}, rng, 0.1, 1.0);
  const DocumentExtent ext = document_extent(doc, true);
  Tape<double> eval_tape;
  const auto eval = embed_lookup(ext, eval_tape.view(table), Dropout{});
  double eval_sum = 0.0, sq_sum = 0.0;
  for (double v : eval.value().data()) {
    eval_sum += v;
    sq_sum += v * v;
  }
  std::mt19937_64 drop_rng(99);
  const Dropout dropout{0.5, &drop_rng};
  const int draws = 10000;
  double total = 0.0;
  for (int i = 0; i < draws; ++i) {
    Tape<double> tape;
    for (double v : embed_lookup(ext, tape.view(table), dropout).value().data()) total += v;
  }
  const double mean = total / draws;
  // Each element is x * Bernoulli(0.5) / 0.5, variance x^2.
  const double stderr_of_mean = std::sqrt(sq_sum) / std::sqrt(static_cast<double>(draws));
  EXPECT_LE(std::abs(mean - eval_sum), 3.0 * stderr_of_mean);
}

// ---------------------------------------------------------------- conv

TEST(ConvSentence, IdentityKernelAndZeroInput) {
  Tape<double> tape;
  std::mt19937_64 rng(6);
  Tensor<double> input = random_tensor({2, 3, 4}, rng, 0.1, 2.0);
  Tensor<double> eye({4, 4});
  for (std::size_t i = 0; i < 4; ++i) eye.at(i, i) = 1.0;
  auto out = conv_sentence(tape.view(input), tape.view(eye), tape.constant(Tensor<double>({4})), 1, Activation::kRelu);
  ASSERT_EQ(out.shape(), (Shape{2, 3, 4}));
  for (std::size_t i = 0; i < input.size(); ++i) EXPECT_EQ(out.value()[i], input[i]);

  Tensor<double> weight = random_tensor({8, 5}, rng);
  auto zero = conv_sentence(tape.constant(Tensor<double>({2, 3, 4})), tape.view(weight),
                            tape.constant(Tensor<double>({5})), 2, Activation::kRelu);
  EXPECT_EQ(zero.shape(), (Shape{2, 2, 5}));
  for (double v : zero.value().data()) EXPECT_EQ(v, 0.0);
}

TEST(ConvSentence, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  Tensor<double> input = random_tensor({2, 5, 3}, rng);
  Tensor<double> weight = random_tensor({9, 4}, rng);
  Tensor<double> bias = random_tensor({4}, rng);
  Tensor<double> probe = random_tensor({2, 3, 4}, rng);
  const GradCheckInput inputs[] = {{"U_p", &weight}, {"b_p", &bias}, {"L", &input}};
  for (Activation act : {Activation::kRelu, Activation::kTanh}) {
    auto r = grad_check(
        [&](Tape<double>& tape, std::span<const Var<double>> v) {
          return sum(mul(conv_sentence(v[2], v[0], v[1], 3, act), tape.constant(probe)));
        },
        inputs);
    EXPECT_LT(r.max_rel_error, 1e-4) << to_string(act) << " " << r.worst_input;
  }
}

// ---------------------------------------------------------------- pooling

TEST(AttentionPool, EqualWindowsAndSingleWindow) {
  std::mt19937_64 rng(10);
  Tensor<double> pw = random_tensor({3, 3}, rng), pb = random_tensor({3}, rng), pv = random_tensor({3}, rng);
  Tensor<double> windows({2, 4, 3});
  const double p[] = {0.3, -1.2, 2.0};
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t q = 0; q < 4; ++q)
      for (std::size_t j = 0; j < 3; ++j) windows.at(s, q, j) = p[j];
  Tape<double> tape;
  const auto mask = ones(8);
  auto pooled = attention_pool(tape.view(windows), std::span<const std::uint8_t>(mask), tape.view(pw), tape.view(pb),
                               tape.view(pv));
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(pooled.value().at(s, j), p[j], 1e-15);

  Tensor<double> random_windows = random_tensor({1, 4, 3}, rng);
  const std::uint8_t first_only[] = {1, 0, 0, 0};
  Var<double> weights;
  auto single = attention_pool(tape.view(random_windows), std::span<const std::uint8_t>(first_only), tape.view(pw),
                               tape.view(pb), tape.view(pv), &weights);
  EXPECT_EQ(weights.value()[0], 1.0);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(single.value().at(0, j), random_windows.at(0, 0, j));
}

TEST(AttentionPool, RandomWeightsNormalisedAndConvex) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor<double> pw = random_tensor({4, 4}, rng), pb = random_tensor({4}, rng), pv = random_tensor({4}, rng);
    Tensor<double> windows = random_tensor({3, 5, 4}, rng);
    std::vector<std::uint8_t> mask(15, 1);
    mask[4] = mask[13] = mask[14] = 0;
    Tape<double> tape;
    Var<double> v;
    auto s = attention_pool(tape.view(windows), std::span<const std::uint8_t>(mask), tape.view(pw), tape.view(pb),
                            tape.view(pv), &v);
    for (std::size_t i = 0; i < 3; ++i) {
      double total = 0.0;
      for (std::size_t q = 0; q < 5; ++q) total += v.value().at(i, q);
      EXPECT_NEAR(total, 1.0, 1e-6);
      for (std::size_t j = 0; j < 4; ++j) {
        double lo = 1e300, hi = -1e300;
        for (std::size_t q = 0; q < 5; ++q) {
          if (!mask[i * 5 + q]) continue;
          lo = std::min(lo, windows.at(i, q, j));
          hi = std::max(hi, windows.at(i, q, j));
        }
        EXPECT_GE(s.value().at(i, j), lo - 1e-12);
        EXPECT_LE(s.value().at(i, j), hi + 1e-12);
      }
    }
  }
}

TEST(AttentionPool, NoValidWindowIsDegenerate) {
  Tape<double> tape;
  const std::uint8_t mask[] = {0, 0};
  EXPECT_THROW(attention_pool(tape.constant(Tensor<double>({1, 2, 2})), std::span<const std::uint8_t>(mask),
                              tape.constant(Tensor<double>({2, 2})), tape.constant(Tensor<double>({2})),
                              tape.constant(Tensor<double>({2}))),
               DegenerateInputError);
}

// ---------------------------------------------------------------- lstm

TEST(Lstm, ZeroWeightsGiveZeroStates) {
  auto p = zero_lstm(3, 2);
  std::mt19937_64 rng(13);
  Tensor<double> x = random_tensor({4, 3}, rng);
  Tape<double> tape;
  auto h = lstm_forward(tape.view(x), bind_lstm(tape, p), std::span<const std::uint8_t>(ones(4)));
  EXPECT_EQ(h.shape(), (Shape{4, 2}));
  for (double v : h.value().data()) EXPECT_EQ(v, 0.0);
}

TEST(Lstm, HandEvaluatedSingleStep) {
  auto p = zero_lstm(1, 1);
  Tape<double> tape;
  auto h = lstm_forward(tape.constant(Tensor<double>({1, 1}, 0.7)), bind_lstm(tape, p),
                        std::span<const std::uint8_t>(ones(1)), tape.constant(Tensor<double>({1, 1})),
                        tape.constant(Tensor<double>({1, 1}, 1.0)));
  // f = i = o = 0.5, candidate 0: c1 = 0.5, h1 = 0.5 tanh(0.5).
  EXPECT_NEAR(h.value()[0], 0.23105857863000487, 1e-15);
}

TEST(Lstm, MaskedStepsCarryState) {
  std::mt19937_64 rng(14);
  LstmParams<double> p = zero_lstm(3, 2);
  for (Tensor<double>* t : {&p.w_forget, &p.w_input, &p.w_cell, &p.w_output}) *t = random_tensor({5, 2}, rng);
  Tensor<double> x = random_tensor({4, 3}, rng);
  const std::uint8_t mask[] = {1, 1, 0, 0};
  Tape<double> tape;
  auto h = lstm_forward(tape.view(x), bind_lstm(tape, p), std::span<const std::uint8_t>(mask));
  for (std::size_t j = 0; j < 2; ++j) {
    EXPECT_EQ(h.value().at(2, j), h.value().at(1, j));
    EXPECT_EQ(h.value().at(3, j), h.value().at(1, j));
  }
}

TEST(Lstm, GradientOfAllGateWeights) {
  std::mt19937_64 rng(15);
  LstmParams<double> p;
  for (Tensor<double>* t : {&p.w_forget, &p.w_input, &p.w_cell, &p.w_output}) *t = random_tensor({7, 3}, rng, -0.8, 0.8);
  for (Tensor<double>* t : {&p.b_forget, &p.b_input, &p.b_cell, &p.b_output}) *t = random_tensor({3}, rng, -0.5, 0.5);
  Tensor<double> x = random_tensor({3, 4}, rng);
  const GradCheckInput inputs[] = {{"W_f", &p.w_forget}, {"W_i", &p.w_input}, {"W_c", &p.w_cell},
                                   {"W_o", &p.w_output}, {"b_f", &p.b_forget}, {"b_i", &p.b_input},
                                   {"b_c", &p.b_cell},   {"b_o", &p.b_output}, {"x", &x}};
  auto r = grad_check(
      [](Tape<double>&, std::span<const Var<double>> v) {
        LstmVars<double> l{v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]};
        return sum(lstm_forward(v[8], l, std::span<const std::uint8_t>(ones(3))));
      },
      inputs);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_input;
}

// ---------------------------------------------------------------- co-attention

TEST(Similarity, ZeroWeightsAndDirectScalar) {
  std::mt19937_64 rng(16);
  Tensor<double> he = random_tensor({3, 4}, rng), ha = random_tensor({2, 4}, rng);
  Tape<double> tape;
  auto zero = similarity_matrix(tape.view(he), tape.view(ha), tape.constant(Tensor<double>({12})),
                                tape.constant(Tensor<double>({1})), std::span<const std::uint8_t>(ones(3)),
                                std::span<const std::uint8_t>(ones(2)));
  for (double v : zero.value().data()) EXPECT_EQ(v, 0.0);

  Tensor<double> e1 = random_tensor({1, 4}, rng), a1 = random_tensor({1, 4}, rng);
  Tensor<double> w = random_tensor({12}, rng), b = random_tensor({1}, rng);
  auto sim = similarity_matrix(tape.view(e1), tape.view(a1), tape.view(w), tape.view(b),
                               std::span<const std::uint8_t>(ones(1)), std::span<const std::uint8_t>(ones(1)));
  double expected = b[0];
  for (std::size_t k = 0; k < 4; ++k) expected += w[k] * e1[k] + w[4 + k] * a1[k] + w[8 + k] * e1[k] * a1[k];
  ASSERT_EQ(sim.shape(), (Shape{1, 1}));
  EXPECT_NEAR(sim.value()[0], expected, 1e-14);
}

TEST(Similarity, SwappingEssaySentencesSwapsRows) {
  std::mt19937_64 rng(18);
  Tensor<double> he = random_tensor({3, 4}, rng), ha = random_tensor({2, 4}, rng);
  Tensor<double> w = random_tensor({12}, rng), b = random_tensor({1}, rng);
  Tensor<double> swapped = he;
  for (std::size_t k = 0; k < 4; ++k) std::swap(swapped.at(0, k), swapped.at(2, k));
  Tape<double> tape;
  auto s1 = similarity_matrix(tape.view(he), tape.view(ha), tape.view(w), tape.view(b),
                              std::span<const std::uint8_t>(ones(3)), std::span<const std::uint8_t>(ones(2)));
  auto s2 = similarity_matrix(tape.view(swapped), tape.view(ha), tape.view(w), tape.view(b),
                              std::span<const std::uint8_t>(ones(3)), std::span<const std::uint8_t>(ones(2)));
  for (std::size_t j = 0; j < 2; ++j) {
    EXPECT_EQ(s1.value().at(0, j), s2.value().at(2, j));
    EXPECT_EQ(s1.value().at(1, j), s2.value().at(1, j));
    EXPECT_EQ(s1.value().at(2, j), s2.value().at(0, j));
  }
}

TEST(Similarity, MaskedPairsAreFilled) {
  std::mt19937_64 rng(19);
  Tensor<double> he = random_tensor({2, 3}, rng), ha = random_tensor({2, 3}, rng);
  Tensor<double> w = random_tensor({9}, rng), b = random_tensor({1}, rng);
  const std::uint8_t em[] = {1, 0}, am[] = {1, 0};
  Tape<double> tape;
  auto s = similarity_matrix(tape.view(he), tape.view(ha), tape.view(w), tape.view(b), std::span<const std::uint8_t>(em),
                             std::span<const std::uint8_t>(am));
  EXPECT_GT(s.value().at(0, 0), -1e3);
  EXPECT_LE(s.value().at(0, 1), -1e8);
  EXPECT_LE(s.value().at(1, 0), -1e8);
}

TEST(EssayToArticle, SingleArticleSentence) {
  std::mt19937_64 rng(20);
  Tensor<double> sim = random_tensor({3, 1}, rng), ha = random_tensor({1, 4}, rng);
  Tape<double> tape;
  auto r = essay_to_article(tape.view(sim), tape.view(ha), std::span<const std::uint8_t>(ones(1)));
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(r.weights.value().at(i, 0), 1.0);
    for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(r.attended.value().at(i, k), ha.at(0, k));
  }
}

TEST(EssayToArticle, UniformRowAveragesUnmaskedArticle) {
  std::mt19937_64 rng(21);
  Tensor<double> sim({2, 4}, 0.3), ha = random_tensor({4, 3}, rng);
  sim.at(1, 0) = 2.0;
  sim.at(0, 3) = sim.at(1, 3) = -1e9;
  const std::uint8_t am[] = {1, 1, 1, 0};
  Tape<double> tape;
  auto r = essay_to_article(tape.view(sim), tape.view(ha), std::span<const std::uint8_t>(am));
  for (std::size_t k = 0; k < 3; ++k) {
    const double mean = (ha.at(0, k) + ha.at(1, k) + ha.at(2, k)) / 3.0;
    EXPECT_NEAR(r.attended.value().at(0, k), mean, 1e-14);
  }
  for (std::size_t i = 0; i < 2; ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < 4; ++j) total += r.weights.value().at(i, j);
    EXPECT_NEAR(total, 1.0, 1e-6);
    EXPECT_EQ(r.weights.value().at(i, 3), 0.0);
  }
}

TEST(ArticleToEssay, SingleEssaySentence) {
  std::mt19937_64 rng(22);
  Tensor<double> sim = random_tensor({1, 3}, rng), he = random_tensor({1, 4}, rng);
  Tape<double> tape;
  auto r = article_to_essay(tape.view(sim), tape.view(he), std::span<const std::uint8_t>(ones(1)),
                            std::span<const std::uint8_t>(ones(3)));
  EXPECT_EQ(r.weights.value()[0], 1.0);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(r.attended.value().at(0, k), he.at(0, k));
}

TEST(ArticleToEssay, DominantSentenceAndTiling) {
  std::mt19937_64 rng(23);
  Tensor<double> sim = random_tensor({4, 3}, rng, -1.0, 1.0), he = random_tensor({4, 5}, rng);
  sim.at(2, 1) += 100.0;
  Tape<double> tape;
  auto r = article_to_essay(tape.view(sim), tape.view(he), std::span<const std::uint8_t>(ones(4)),
                            std::span<const std::uint8_t>(ones(3)));
  EXPECT_GT(r.weights.value()[2], 0.999);
  double total = 0.0;
  for (double v : r.weights.value().data()) total += v;
  EXPECT_NEAR(total, 1.0, 1e-6);
  ASSERT_EQ(r.attended.shape(), (Shape{4, 5}));
  for (std::size_t i = 1; i < 4; ++i)
    for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(r.attended.value().at(i, k), r.attended.value().at(0, k));
}

// Reordering article rows permutes Sim columns; the column max per essay
// sentence, and so the essay weights, must not move.
TEST(ArticleToEssay, InvariantToArticleOrder) {
  std::mt19937_64 rng(24);
  Tensor<double> he = random_tensor({3, 4}, rng), ha = random_tensor({5, 4}, rng);
  Tensor<double> w = random_tensor({12}, rng), b = random_tensor({1}, rng);
  std::vector<std::size_t> order = {3, 0, 4, 2, 1};
  Tensor<double> permuted({5, 4});
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t k = 0; k < 4; ++k) permuted.at(r, k) = ha.at(order[r], k);
  auto weights_for = [&](const Tensor<double>& article) {
    Tape<double> tape;
    auto sim = similarity_matrix(tape.view(he), tape.view(article), tape.view(w), tape.view(b),
                                 std::span<const std::uint8_t>(ones(3)), std::span<const std::uint8_t>(ones(5)));
    return article_to_essay(sim, tape.view(he), std::span<const std::uint8_t>(ones(3)),
                            std::span<const std::uint8_t>(ones(5)))
        .weights.value();
  };
  EXPECT_EQ(values(weights_for(ha)), values(weights_for(permuted)));
}

TEST(Fuse, LayoutAndZeros) {
  std::mt19937_64 rng(25);
  Tensor<double> he = random_tensor({3, 100}, rng), hta = random_tensor({3, 100}, rng), hte = random_tensor({3, 100}, rng);
  Tape<double> tape;
  auto g = fuse(tape.view(he), tape.view(hta), tape.view(hte));
  ASSERT_EQ(g.shape(), (Shape{3, 400}));
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t k = 0; k < 100; ++k) {
      EXPECT_EQ(g.value().at(i, k), he.at(i, k));
      EXPECT_EQ(g.value().at(i, 100 + k), hta.at(i, k));
      EXPECT_EQ(g.value().at(i, 200 + k), he.at(i, k) * hta.at(i, k));
      EXPECT_EQ(g.value().at(i, 300 + k), he.at(i, k) * hte.at(i, k));
    }
  }
  const Tensor<double> zero({3, 100});
  auto gz = fuse(tape.view(he), tape.view(zero), tape.view(zero));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 400; ++k) EXPECT_EQ(gz.value().at(i, k), k < 100 ? he.at(i, k) : 0.0);
}

// ---------------------------------------------------------------- full model

TEST(ForwardFull, ZeroParametersScoreHalf) {
  const ModelConfig c = tiny_config();
  std::mt19937_64 rng(26);
  auto params = ModelParams<double>::zeros(c, 20);
  auto essay = random_document(c, 20, 3, rng), article = random_document(c, 20, 4, rng);
  EXPECT_EQ(predict(params, essay, article, c), 0.5);
}

TEST(ForwardFull, ShapeChainWithDefaultConfig) {
  const ModelConfig c;
  std::mt19937_64 rng(27);
  auto params = ModelParams<float>::glorot(c, 300, rng);
  std::uniform_int_distribution<std::size_t> count(1, 10);
  for (int trial = 0; trial < 3; ++trial) {
    const std::size_t se = count(rng), sa = count(rng);
    auto essay = random_document(c, 300, se, rng), article = random_document(c, 300, sa, rng);
    Tape<float> tape;
    auto t = forward_full(tape, bind(tape, params), essay, article, c);
    EXPECT_EQ(t.essay.hidden.shape(), (Shape{se, 100}));
    EXPECT_EQ(t.article.hidden.shape(), (Shape{sa, 100}));
    EXPECT_EQ(t.sim.shape(), (Shape{se, sa}));
    EXPECT_EQ(t.essay_to_article.shape(), (Shape{se, sa}));
    EXPECT_EQ(t.attended_article.shape(), (Shape{se, 100}));
    EXPECT_EQ(t.article_to_essay.shape(), (Shape{se}));
    EXPECT_EQ(t.attended_essay.shape(), (Shape{se, 100}));
    EXPECT_EQ(t.fused.shape(), (Shape{se, 400}));
    EXPECT_EQ(t.modeled.shape(), (Shape{1, 100}));
    EXPECT_EQ(t.score.shape(), (Shape{1}));
    EXPECT_GT(t.score.value()[0], 0.0f);
    EXPECT_LT(t.score.value()[0], 1.0f);
  }
}

TEST(ForwardFull, ScoreStaysInOpenUnitInterval) {
  const ModelConfig c = tiny_config();
  std::mt19937_64 rng(28);
  for (int trial = 0; trial < 30; ++trial) {
    auto params = ModelParams<double>::glorot(c, 30, rng);
    for (auto& [name, t] : params.named())
      for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] *= 4.0;
    auto essay = random_document(c, 30, 1 + trial % 6, rng), article = random_document(c, 30, 1 + trial % 4, rng);
    const double y = predict(params, essay, article, c);
    EXPECT_GT(y, 0.0);
    EXPECT_LT(y, 1.0);
  }
}

TEST(ForwardFull, SameDocumentEncodesIdentically) {
  const ModelConfig c = tiny_config();
  std::mt19937_64 rng(29);
  auto params = ModelParams<double>::glorot(c, 30, rng);
  auto doc = random_document(c, 30, 4, rng);
  Tape<double> tape;
  auto t = forward_full(tape, bind(tape, params), doc, doc, c);
  EXPECT_EQ(values(t.essay.hidden.value()), values(t.article.hidden.value()));
}

TEST(ForwardFull, EvaluationIsDeterministic) {
  const ModelConfig c = tiny_config();
  std::mt19937_64 rng(30);
  auto params = ModelParams<double>::glorot(c, 30, rng);
  auto essay = random_document(c, 30, 5, rng), article = random_document(c, 30, 3, rng);
  const double a = predict(params, essay, article, c);
  const double b = predict(params, essay, article, c);
  EXPECT_EQ(a, b);
}

TEST(ForwardFull, TrimmedMatchesFullPadding) {
  const ModelConfig c = tiny_config();
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    auto params = ModelParams<double>::glorot(c, 30, rng);
    auto essay = random_document(c, 30, 1 + trial % 5, rng), article = random_document(c, 30, 1 + trial % 3, rng);
    Tape<double> t1, t2;
    const double trimmed = forward_full(t1, bind(t1, params), essay, article, c, {}, true).score.value()[0];
    const double padded = forward_full(t2, bind(t2, params), essay, article, c, {}, false).score.value()[0];
    EXPECT_NEAR(trimmed, padded, 1e-12);
  }
}

TEST(ForwardFull, EmptyDocumentIsDegenerate) {
  const ModelConfig c = tiny_config();
  std::mt19937_64 rng(32);
  auto params = ModelParams<double>::zeros(c, 20);
  auto article = random_document(c, 20, 2, rng);
  auto empty = random_document(c, 20, 0, rng);
  EXPECT_THROW(predict(params, empty, article, c), DegenerateInputError);
  EXPECT_THROW(predict(params, article, empty, c), DegenerateInputError);
}

TEST(ForwardFull, EndToEndGradientMatchesFiniteDifferences) {
  const ModelConfig c = tiny_config();
  std::mt19937_64 rng(33);
  const std::size_t vocab = 12;
  auto params = ModelParams<double>::glorot(c, vocab, rng);
  for (auto& [name, t] : params.named()) {
    // Nonzero biases so every path carries gradient.
    if (name.find(".b") != std::string::npos || name == "sim.b" || name == "out.b")
      *t = random_tensor(t->shape(), rng, -0.3, 0.3);
  }
  auto essay = random_document(c, vocab, 2, rng), article = random_document(c, vocab, 2, rng);
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
    return sum(forward_full(tape, p, essay, article, c).score);
  };
  // Some entries have gradients near 1e-9, so the differences are taken in
  // extended precision.
  auto r = grad_check_extended(body, body, inputs);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_input << "[" << r.worst_index << "] analytic " << r.analytic
                                   << " numeric " << r.numeric;
  EXPECT_GT(r.entries_checked, 100u);
}

}  // namespace
}  // namespace coattn
