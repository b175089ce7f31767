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

#include "coattn/model.hpp"

#include <algorithm>
#include <cmath>

namespace coattn {

std::string to_string(Activation act) { return act == Activation::kRelu ? "relu" : "tanh"; }

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  throw ConfigError("unknown activation '" + name + "' (expected relu or tanh)");
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string(name) + " must be positive");
  };
  positive(embed_dim, "embed_dim");
  positive(kernel, "kernel");
  positive(conv_filters, "conv_filters");
  positive(lstm_hidden, "lstm_hidden");
  positive(modeling_hidden, "modeling_hidden");
  positive(max_sentences, "max_sentences");
  positive(max_tokens, "max_tokens");
  if (vocab_size < 3) throw ConfigError("vocab_size must leave room for PAD, UNK and one token");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (max_tokens < kernel) throw ConfigError("max_tokens must be at least the convolution kernel");
}

std::size_t EncodedDocument::active_width() const {
  std::size_t widest = kernel;
  for (std::size_t len : sentence_length) widest = std::max(widest, len);
  return std::min(widest, max_tokens);
}

// ---------------------------------------------------------------- params

std::vector<std::pair<std::string, Shape>> parameter_shapes(const ModelConfig& c, std::size_t vocab_rows) {
  std::vector<std::pair<std::string, Shape>> out = {
      {"embedding", {vocab_rows, c.embed_dim}},
      {"conv.w", {c.kernel * c.embed_dim, c.conv_filters}},
      {"conv.b", {c.conv_filters}},
      {"pool.w", {c.conv_filters, c.conv_filters}},
      {"pool.b", {c.conv_filters}},
      {"pool.v", {c.conv_filters}},
  };
  auto lstm = [&out](const std::string& prefix, std::size_t in, std::size_t hidden) {
    for (const char* gate : {"forget", "input", "cell", "output"}) {
      out.push_back({prefix + ".w_" + gate, {hidden + in, hidden}});
    }
    for (const char* gate : {"forget", "input", "cell", "output"}) {
      out.push_back({prefix + ".b_" + gate, {hidden}});
    }
  };
  lstm("sentence_lstm", c.conv_filters, c.lstm_hidden);
  out.push_back({"sim.w", {3 * c.lstm_hidden}});
  out.push_back({"sim.b", {1}});
  lstm("modeling_lstm", 4 * c.lstm_hidden, c.modeling_hidden);
  out.push_back({"out.w", {c.modeling_hidden}});
  out.push_back({"out.b", {1}});
  return out;
}

namespace {

template <typename P, typename Params>
std::vector<std::pair<std::string, P>> named_impl(Params& p) {
  std::vector<std::pair<std::string, P>> out = {
      {"embedding", &p.embedding}, {"conv.w", &p.conv_w}, {"conv.b", &p.conv_b},
      {"pool.w", &p.pool_w},       {"pool.b", &p.pool_b}, {"pool.v", &p.pool_v},
  };
  auto lstm = [&out](const std::string& prefix, auto& l) {
    out.push_back({prefix + ".w_forget", &l.w_forget});
    out.push_back({prefix + ".w_input", &l.w_input});
    out.push_back({prefix + ".w_cell", &l.w_cell});
    out.push_back({prefix + ".w_output", &l.w_output});
    out.push_back({prefix + ".b_forget", &l.b_forget});
    out.push_back({prefix + ".b_input", &l.b_input});
    out.push_back({prefix + ".b_cell", &l.b_cell});
    out.push_back({prefix + ".b_output", &l.b_output});
  };
  lstm("sentence_lstm", p.sentence_lstm);
  out.push_back({"sim.w", &p.sim_w});
  out.push_back({"sim.b", &p.sim_b});
  lstm("modeling_lstm", p.modeling_lstm);
  out.push_back({"out.w", &p.out_w});
  out.push_back({"out.b", &p.out_b});
  return out;
}

template <typename T>
void allocate(ModelParams<T>& p, const ModelConfig& config, std::size_t vocab_rows) {
  const auto shapes = parameter_shapes(config, vocab_rows);
  auto slots = p.named();
  for (std::size_t i = 0; i < slots.size(); ++i) {
    *slots[i].second = Tensor<T>(shapes[i].second);
    slots[i].second->set_requires_grad(true);
  }
  p.embedding.set_requires_grad(config.train_embeddings);
}

bool is_bias(const std::string& name) {
  return name.find(".b") != std::string::npos && name != "pool.v";
}

}  // namespace

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> ModelParams<T>::named() {
  return named_impl<Tensor<T>*>(*this);
}

template <typename T>
std::vector<std::pair<std::string, const Tensor<T>*>> ModelParams<T>::named() const {
  return named_impl<const Tensor<T>*>(*this);
}

template <typename T>
ModelParams<T> ModelParams<T>::zeros(const ModelConfig& config, std::size_t vocab_rows) {
  config.validate();
  ModelParams<T> p;
  allocate(p, config, vocab_rows);
  return p;
}

template <typename T>
ModelParams<T> ModelParams<T>::glorot(const ModelConfig& config, std::size_t vocab_rows, std::mt19937_64& rng) {
  ModelParams<T> p = zeros(config, vocab_rows);
  for (auto& [name, tensor] : p.named()) {
    if (name == "embedding") {
      std::uniform_real_distribution<double> dist(-0.05, 0.05);
      for (std::size_t i = 0; i < tensor->size(); ++i) (*tensor)[i] = static_cast<T>(dist(rng));
      for (std::size_t j = 0; j < config.embed_dim; ++j) tensor->at(kPadId, j) = T{0};
      continue;
    }
    if (is_bias(name)) continue;
    // Vectors are treated as n x 1 matrices.
    const std::size_t fan_in = tensor->dim(0);
    const std::size_t fan_out = tensor->rank() == 2 ? tensor->dim(1) : 1;
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (std::size_t i = 0; i < tensor->size(); ++i) (*tensor)[i] = static_cast<T>(dist(rng));
  }
  return p;
}

template <typename T>
void ModelParams<T>::zero_grad() {
  for (auto& entry : named()) entry.second->zero_grad();
}

template <typename T>
template <typename U>
ModelParams<U> ModelParams<T>::cast() const {
  ModelParams<U> out;
  auto dst = out.named();
  auto src = named();
  for (std::size_t i = 0; i < src.size(); ++i) *dst[i].second = src[i].second->template cast<U>();
  return out;
}

namespace {

template <typename T, typename Params, typename Binder>
ParamVars<T> bind_with(Params& p, Binder leaf) {
  auto lstm = [&leaf](auto& l) {
    return LstmVars<T>{leaf(l.w_forget), leaf(l.w_input), leaf(l.w_cell), leaf(l.w_output),
                       leaf(l.b_forget), leaf(l.b_input), leaf(l.b_cell), leaf(l.b_output)};
  };
  ParamVars<T> v;
  v.embedding = leaf(p.embedding);
  v.conv_w = leaf(p.conv_w);
  v.conv_b = leaf(p.conv_b);
  v.pool_w = leaf(p.pool_w);
  v.pool_b = leaf(p.pool_b);
  v.pool_v = leaf(p.pool_v);
  v.sentence_lstm = lstm(p.sentence_lstm);
  v.sim_w = leaf(p.sim_w);
  v.sim_b = leaf(p.sim_b);
  v.modeling_lstm = lstm(p.modeling_lstm);
  v.out_w = leaf(p.out_w);
  v.out_b = leaf(p.out_b);
  return v;
}

}  // namespace

template <typename T>
ParamVars<T> bind(Tape<T>& tape, ModelParams<T>& params) {
  return bind_with<T>(params, [&tape](Tensor<T>& t) { return tape.leaf(t); });
}

template <typename T>
ParamVars<T> bind(Tape<T>& tape, const ModelParams<T>& params) {
  return bind_with<T>(params, [&tape](const Tensor<T>& t) { return tape.view(t); });
}

// ---------------------------------------------------------------- layers

DocumentExtent document_extent(const EncodedDocument& doc, bool trim) {
  DocumentExtent ext;
  ext.sentences = trim ? doc.num_sentences() : doc.max_sentences;
  ext.tokens = trim ? doc.active_width() : doc.max_tokens;
  if (ext.sentences == 0) throw DegenerateInputError("document has no sentences");
  const std::size_t windows = ext.tokens - doc.kernel + 1;
  ext.ids.resize(ext.sentences * ext.tokens);
  ext.sentence_mask.assign(doc.sentence_mask.begin(), doc.sentence_mask.begin() + ext.sentences);
  ext.window_mask.resize(ext.sentences * windows);
  for (std::size_t s = 0; s < ext.sentences; ++s) {
    for (std::size_t w = 0; w < ext.tokens; ++w) ext.ids[s * ext.tokens + w] = doc.id(s, w);
    for (std::size_t q = 0; q < windows; ++q) {
      ext.window_mask[s * windows + q] = doc.window_mask[s * doc.windows_per_row() + q];
    }
    // Padding sentences pool their first window; the sentence mask hides the
    // result from every later stage.
    if (!ext.sentence_mask[s]) ext.window_mask[s * windows] = 1;
  }
  return ext;
}

template <typename T>
Var<T> embed_lookup(const DocumentExtent& doc, Var<T> embedding, const Dropout& dropout) {
  Var<T> out = embedding_lookup(embedding, std::span<const std::int32_t>(doc.ids), Shape{doc.sentences, doc.tokens});
  if (!dropout.active()) return out;
  std::bernoulli_distribution keep(1.0 - dropout.rate);
  const T kept = static_cast<T>(1.0 / (1.0 - dropout.rate));
  Tensor<T> mask(out.shape());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = keep(*dropout.rng) ? kept : T{0};
  return mul(out, out.tape().constant(std::move(mask)));
}

template <typename T>
Var<T> conv_sentence(Var<T> embedded, Var<T> weight, Var<T> bias, std::size_t kernel, Activation act) {
  const Shape& in = embedded.shape();
  if (in.size() != 3) throw DimensionError("conv_sentence: expected S x W x d input, got " + shape_string(in));
  const std::size_t s = in[0], p = in[1] - kernel + 1;
  Var<T> windows = unfold_windows(embedded, kernel);
  Var<T> flat = reshape(windows, {s * p, kernel * in[2]});
  Var<T> pre = add_bias(matmul(flat, weight), bias);
  Var<T> act_out = act == Activation::kRelu ? relu(pre) : tanh(pre);
  return reshape(act_out, {s, p, weight.shape()[1]});
}

template <typename T>
Var<T> attention_pool(Var<T> windows, std::span<const std::uint8_t> window_mask, Var<T> weight, Var<T> bias,
                      Var<T> context, Var<T>* weights) {
  const Shape& in = windows.shape();
  if (in.size() != 3) throw DimensionError("attention_pool: expected S x P x d input, got " + shape_string(in));
  const std::size_t s = in[0], p = in[1], d = in[2];
  Var<T> hidden = tanh(add_bias(matmul(reshape(windows, {s * p, d}), weight), bias));
  Var<T> logits = reshape(matmul(hidden, reshape(context, {context.size(), 1})), {s, p});
  Var<T> v = softmax_masked(logits, window_mask);
  if (weights != nullptr) *weights = v;
  return weighted_pool(windows, v);
}

template <typename T>
Var<T> lstm_forward(Var<T> inputs, const LstmVars<T>& lstm, std::span<const std::uint8_t> step_mask, Var<T> h0,
                    Var<T> c0) {
  const Shape& in = inputs.shape();
  if (in.size() != 2 || step_mask.size() != in[0]) {
    throw DimensionError("lstm_forward: inputs " + shape_string(in) + " with " + std::to_string(step_mask.size()) +
                         " mask entries");
  }
  const std::size_t hidden = lstm.b_forget.size();
  if (lstm.w_forget.shape() != Shape{hidden + in[1], hidden}) {
    throw DimensionError("lstm_forward: gate weight " + shape_string(lstm.w_forget.shape()) + " does not fit input " +
                         shape_string(in));
  }
  Tape<T>& tape = inputs.tape();
  Var<T> h = h0.valid() ? h0 : tape.constant(Tensor<T>({1, hidden}));
  Var<T> c = c0.valid() ? c0 : tape.constant(Tensor<T>({1, hidden}));
  if (h.shape() != Shape{1, hidden} || c.shape() != Shape{1, hidden}) {
    throw DimensionError("lstm_forward: initial state must be 1 x " + std::to_string(hidden));
  }
  std::vector<Var<T>> states;
  states.reserve(in[0]);
  for (std::size_t t = 0; t < in[0]; ++t) {
    if (step_mask[t]) {
      const Var<T> joined_parts[] = {h, row(inputs, t)};
      Var<T> joined = concat<T>(joined_parts, 1);
      Var<T> f = sigmoid(add_bias(matmul(joined, lstm.w_forget), lstm.b_forget));
      Var<T> i = sigmoid(add_bias(matmul(joined, lstm.w_input), lstm.b_input));
      Var<T> candidate = tanh(add_bias(matmul(joined, lstm.w_cell), lstm.b_cell));
      Var<T> o = sigmoid(add_bias(matmul(joined, lstm.w_output), lstm.b_output));
      c = add(mul(f, c), mul(i, candidate));
      h = mul(o, tanh(c));
    }
    states.push_back(h);
  }
  return concat<T>(states, 0);
}

namespace {

std::vector<std::uint8_t> pair_mask(std::span<const std::uint8_t> rows, std::span<const std::uint8_t> cols) {
  std::vector<std::uint8_t> out(rows.size() * cols.size());
  for (std::size_t t = 0; t < rows.size(); ++t) {
    for (std::size_t j = 0; j < cols.size(); ++j) out[t * cols.size() + j] = rows[t] && cols[j];
  }
  return out;
}

std::vector<std::uint8_t> column_mask(std::size_t rows, std::span<const std::uint8_t> cols) {
  std::vector<std::uint8_t> out(rows * cols.size());
  for (std::size_t t = 0; t < rows; ++t) std::copy(cols.begin(), cols.end(), out.begin() + t * cols.size());
  return out;
}

}  // namespace

template <typename T>
Var<T> similarity_matrix(Var<T> essay, Var<T> article, Var<T> weight, Var<T> bias,
                         std::span<const std::uint8_t> essay_mask, std::span<const std::uint8_t> article_mask) {
  Var<T> sim = trilinear_similarity(essay, article, weight, bias);
  if (essay_mask.size() != sim.shape()[0] || article_mask.size() != sim.shape()[1]) {
    throw DimensionError("similarity_matrix: masks do not match " + shape_string(sim.shape()));
  }
  const auto mask = pair_mask(essay_mask, article_mask);
  return masked_fill(sim, std::span<const std::uint8_t>(mask), static_cast<T>(-1e9));
}

template <typename T>
EssayToArticle<T> essay_to_article(Var<T> sim, Var<T> article, std::span<const std::uint8_t> article_mask) {
  if (std::none_of(article_mask.begin(), article_mask.end(), [](std::uint8_t m) { return m != 0; })) {
    throw DegenerateInputError("essay_to_article: article has no unmasked sentence");
  }
  const auto mask = column_mask(sim.shape()[0], article_mask);
  Var<T> weights = softmax_masked(sim, std::span<const std::uint8_t>(mask));
  return {weights, matmul(weights, article)};
}

template <typename T>
ArticleToEssay<T> article_to_essay(Var<T> sim, Var<T> essay, std::span<const std::uint8_t> essay_mask,
                                   std::span<const std::uint8_t> article_mask) {
  if (std::none_of(essay_mask.begin(), essay_mask.end(), [](std::uint8_t m) { return m != 0; })) {
    throw DegenerateInputError("article_to_essay: essay has no unmasked sentence");
  }
  const std::size_t se = sim.shape()[0];
  const auto mask = column_mask(se, article_mask);
  Var<T> best = max_last_axis(sim, std::span<const std::uint8_t>(mask));
  Var<T> weights = softmax_masked(best, essay_mask);
  Var<T> summary = matmul(reshape(weights, {1, se}), essay);
  return {weights, summary, tile_rows(summary, se)};
}

template <typename T>
Var<T> fuse(Var<T> essay, Var<T> attended_article, Var<T> attended_essay) {
  if (essay.shape() != attended_article.shape() || essay.shape() != attended_essay.shape()) {
    throw DimensionError("fuse: shapes " + shape_string(essay.shape()) + ", " +
                         shape_string(attended_article.shape()) + ", " + shape_string(attended_essay.shape()) +
                         " must agree");
  }
  const Var<T> parts[] = {essay, attended_article, mul(essay, attended_article), mul(essay, attended_essay)};
  return concat<T>(parts, 1);
}

template <typename T>
EncodedSide<T> encode_document_side(const ParamVars<T>& params, const EncodedDocument& doc, const ModelConfig& config,
                                    const Dropout& dropout, bool trim) {
  EncodedSide<T> side;
  side.extent = document_extent(doc, trim);
  side.embedded = embed_lookup(side.extent, params.embedding, dropout);
  side.windows = conv_sentence(side.embedded, params.conv_w, params.conv_b, config.kernel, config.conv_activation);
  side.sentences = attention_pool(side.windows, std::span<const std::uint8_t>(side.extent.window_mask),
                                  params.pool_w, params.pool_b, params.pool_v, &side.window_weights);
  side.hidden = lstm_forward(side.sentences, params.sentence_lstm,
                             std::span<const std::uint8_t>(side.extent.sentence_mask));
  return side;
}

template <typename T>
ForwardTrace<T> score_pair(const ParamVars<T>& params, EncodedSide<T> essay, EncodedSide<T> article) {
  ForwardTrace<T> tr;
  tr.essay = std::move(essay);
  tr.article = std::move(article);
  const std::span<const std::uint8_t> emask(tr.essay.extent.sentence_mask);
  const std::span<const std::uint8_t> amask(tr.article.extent.sentence_mask);
  tr.sim = similarity_matrix(tr.essay.hidden, tr.article.hidden, params.sim_w, params.sim_b, emask, amask);
  auto e2a = essay_to_article(tr.sim, tr.article.hidden, amask);
  tr.essay_to_article = e2a.weights;
  tr.attended_article = e2a.attended;
  auto a2e = article_to_essay(tr.sim, tr.essay.hidden, emask, amask);
  tr.article_to_essay = a2e.weights;
  tr.essay_summary = a2e.summary;
  tr.attended_essay = a2e.attended;
  tr.fused = fuse(tr.essay.hidden, tr.attended_article, tr.attended_essay);
  Var<T> states = lstm_forward(tr.fused, params.modeling_lstm, emask);
  tr.modeled = row(states, states.shape()[0] - 1);
  Var<T> logit = matmul(tr.modeled, reshape(params.out_w, {params.out_w.size(), 1}));
  tr.score = sigmoid(add_bias(reshape(logit, {1}), params.out_b));
  return tr;
}

template <typename T>
ForwardTrace<T> forward_full(Tape<T>& tape, const ParamVars<T>& params, const EncodedDocument& essay,
                             const EncodedDocument& article, const ModelConfig& config, const Dropout& dropout,
                             bool trim) {
  if (&params.embedding.tape() != &tape) throw UsageError("forward_full: parameters are bound to another tape");
  if (essay.num_sentences() == 0) throw DegenerateInputError("forward_full: essay is empty");
  if (article.num_sentences() == 0) throw DegenerateInputError("forward_full: article is empty");
  auto essay_side = encode_document_side(params, essay, config, dropout, trim);
  auto article_side = encode_document_side(params, article, config, dropout, trim);
  return score_pair(params, std::move(essay_side), std::move(article_side));
}

template <typename T>
T predict(const ModelParams<T>& params, const EncodedDocument& essay, const EncodedDocument& article,
          const ModelConfig& config) {
  Tape<T> tape;
  auto vars = bind(tape, params);
  return forward_full(tape, vars, essay, article, config).score.value()[0];
}

#define COATTN_INSTANTIATE(T)                                                                                      \
  template struct ModelParams<T>;                                                                                  \
  template ModelParams<double> ModelParams<T>::cast<double>() const;                                               \
  template ModelParams<float> ModelParams<T>::cast<float>() const;                                                 \
  template ParamVars<T> bind(Tape<T>&, ModelParams<T>&);                                                           \
  template ParamVars<T> bind(Tape<T>&, const ModelParams<T>&);                                                     \
  template Var<T> embed_lookup(const DocumentExtent&, Var<T>, const Dropout&);                                     \
  template Var<T> conv_sentence(Var<T>, Var<T>, Var<T>, std::size_t, Activation);                                  \
  template Var<T> attention_pool(Var<T>, std::span<const std::uint8_t>, Var<T>, Var<T>, Var<T>, Var<T>*);          \
  template Var<T> lstm_forward(Var<T>, const LstmVars<T>&, std::span<const std::uint8_t>, Var<T>, Var<T>);                         \
  template Var<T> similarity_matrix(Var<T>, Var<T>, Var<T>, Var<T>, std::span<const std::uint8_t>,                 \
                                    std::span<const std::uint8_t>);                                                \
  template EssayToArticle<T> essay_to_article(Var<T>, Var<T>, std::span<const std::uint8_t>);                      \
  template ArticleToEssay<T> article_to_essay(Var<T>, Var<T>, std::span<const std::uint8_t>,                       \
                                              std::span<const std::uint8_t>);                                      \
  template Var<T> fuse(Var<T>, Var<T>, Var<T>);                                                                    \
  template EncodedSide<T> encode_document_side(const ParamVars<T>&, const EncodedDocument&, const ModelConfig&,    \
                                               const Dropout&, bool);                                              \
  template ForwardTrace<T> score_pair(const ParamVars<T>&, EncodedSide<T>, EncodedSide<T>);                        \
  template ForwardTrace<T> forward_full(Tape<T>&, const ParamVars<T>&, const EncodedDocument&,                     \
                                        const EncodedDocument&, const ModelConfig&, const Dropout&, bool);         \
  template T predict(const ModelParams<T>&, const EncodedDocument&, const EncodedDocument&, const ModelConfig&);

COATTN_INSTANTIATE(float)
COATTN_INSTANTIATE(double)
COATTN_INSTANTIATE(long double)

#undef COATTN_INSTANTIATE

}  // namespace coattn
