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

#include <charconv>
#include <fstream>
#include <sstream>
#include <type_traits>

#include "coattn/training.hpp"

// Line-oriented text format:
//
//   coattn-checkpoint <version>
//   dtype float|double
//   config <key> <value>          (one line per ModelConfig field)
//   scale <min> <max>
//   vocab <n>                     followed by n token lines in id order
//   param <name> <rank> <dims...> followed by one line of values
//   end
//
// Values use the shortest decimal form that reads back to the same binary
// value, so a save/load round trip is exact.

namespace coattn {

namespace {

template <typename T>
constexpr const char* dtype_name() {
  return std::is_same_v<T, float> ? "float" : "double";
}

template <typename T>
void write_values(std::ostream& out, const Tensor<T>& t) {
  char buf[64];
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto res = std::to_chars(buf, buf + sizeof(buf), t[i]);
    if (i) out.put(' ');
    out.write(buf, res.ptr - buf);
  }
  out.put('\n');
}

CheckpointError truncated(const std::string& what) {
  return CheckpointError(CheckpointError::Kind::kTruncated, "checkpoint truncated: " + what);
}

CheckpointError malformed(const std::string& what) {
  return CheckpointError(CheckpointError::Kind::kFormat, "malformed checkpoint: " + what);
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::string line(const char* expecting) {
    std::string l;
    if (!std::getline(in_, l)) throw truncated("expected " + std::string(expecting));
    // Every written line ends in a newline, so a partial last line means the
    // file was cut short.
    if (in_.eof()) throw truncated("incomplete " + std::string(expecting) + " line");
    return l;
  }

  std::istringstream fields(const char* expecting, const std::string& keyword) {
    std::istringstream s(line(expecting));
    std::string head;
    s >> head;
    if (head != keyword) throw malformed("expected '" + keyword + "', found '" + head + "'");
    return s;
  }

 private:
  std::istream& in_;
};

template <typename V>
V read_field(std::istringstream& s, const std::string& what) {
  V v{};
  if (!(s >> v)) throw malformed("bad value for " + what);
  return v;
}

template <typename S>
void read_values(const std::string& text, std::size_t count, Tensor<S>& out, const std::string& name) {
  const char* p = text.data();
  const char* end = text.data() + text.size();
  for (std::size_t i = 0; i < count; ++i) {
    while (p < end && *p == ' ') ++p;
    if (p == end) throw truncated("parameter " + name + " has " + std::to_string(i) + " of " + std::to_string(count) + " values");
    S v{};
    const auto res = std::from_chars(p, end, v);
    if (res.ec != std::errc()) throw malformed("bad number in parameter " + name);
    out[i] = v;
    p = res.ptr;
  }
  while (p < end && *p == ' ') ++p;
  if (p != end) throw malformed("parameter " + name + " has more than " + std::to_string(count) + " values");
}

template <typename S, typename T>
ModelParams<T> read_params(Reader& reader, const ModelConfig& config, std::size_t vocab_rows) {
  ModelParams<S> params = ModelParams<S>::zeros(config, vocab_rows);
  for (auto& [name, tensor] : params.named()) {
    auto header = reader.fields("parameter header", "param");
    const auto got_name = read_field<std::string>(header, "parameter name");
    if (got_name != name) throw malformed("expected parameter " + name + ", found " + got_name);
    const auto rank = read_field<std::size_t>(header, name + " rank");
    Shape shape(rank);
    for (auto& d : shape) d = read_field<std::size_t>(header, name + " dims");
    if (shape != tensor->shape()) {
      throw CheckpointError(CheckpointError::Kind::kShape, "parameter " + name + " has shape " +
                                                               shape_string(shape) + ", config requires " +
                                                               shape_string(tensor->shape()));
    }
    read_values(reader.line("parameter values"), tensor->size(), *tensor, name);
  }
  if constexpr (std::is_same_v<S, T>) {
    return params;
  } else {
    ModelParams<T> cast = params.template cast<T>();
    for (auto& [name, tensor] : cast.named()) tensor->set_requires_grad(true);
    cast.embedding.set_requires_grad(config.train_embeddings);
    return cast;
  }
}

}  // namespace

template <typename T>
void save_checkpoint(const EssayScorer<T>& scorer, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(CheckpointError::Kind::kIo, "cannot write checkpoint " + path.string());
  const ModelConfig& c = scorer.config;
  out << "coattn-checkpoint " << kCheckpointVersion << '\n';
  out << "dtype " << dtype_name<T>() << '\n';
  out << "config embed_dim " << c.embed_dim << '\n';
  out << "config kernel " << c.kernel << '\n';
  out << "config conv_filters " << c.conv_filters << '\n';
  out << "config lstm_hidden " << c.lstm_hidden << '\n';
  out << "config modeling_hidden " << c.modeling_hidden << '\n';
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), c.dropout);
  out << "config dropout " << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf)) << '\n';
  out << "config vocab_size " << c.vocab_size << '\n';
  out << "config max_sentences " << c.max_sentences << '\n';
  out << "config max_tokens " << c.max_tokens << '\n';
  out << "config conv_activation " << to_string(c.conv_activation) << '\n';
  out << "config train_embeddings " << (c.train_embeddings ? 1 : 0) << '\n';
  out << "scale " << scorer.scale.min_score << ' ' << scorer.scale.max_score << '\n';
  out << "vocab " << scorer.vocab.size() << '\n';
  for (const std::string& tok : scorer.vocab.tokens()) out << tok << '\n';
  for (const auto& [name, tensor] : scorer.params.named()) {
    out << "param " << name << ' ' << tensor->rank();
    for (std::size_t d : tensor->shape()) out << ' ' << d;
    out << '\n';
    write_values(out, *tensor);
  }
  out << "end\n";
  if (!out) throw CheckpointError(CheckpointError::Kind::kIo, "failed writing checkpoint " + path.string());
}

template <typename T>
EssayScorer<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::kIo, "cannot open checkpoint " + path.string());
  Reader reader(in);

  auto magic = reader.fields("format header", "coattn-checkpoint");
  const int version = read_field<int>(magic, "format version");
  if (version != kCheckpointVersion) {
    throw CheckpointError(CheckpointError::Kind::kVersion, "checkpoint version " + std::to_string(version) +
                                                               " is not supported (expected " +
                                                               std::to_string(kCheckpointVersion) + ")");
  }
  auto dtype_line = reader.fields("dtype", "dtype");
  const auto dtype = read_field<std::string>(dtype_line, "dtype");
  if (dtype != "float" && dtype != "double") throw malformed("unknown dtype " + dtype);

  EssayScorer<T> scorer;
  ModelConfig& c = scorer.config;
  auto size_field = [&](const char* key, std::size_t& dst) {
    auto s = reader.fields("config entry", "config");
    if (read_field<std::string>(s, "config key") != key) throw malformed(std::string("expected config ") + key);
    dst = read_field<std::size_t>(s, key);
  };
  size_field("embed_dim", c.embed_dim);
  size_field("kernel", c.kernel);
  size_field("conv_filters", c.conv_filters);
  size_field("lstm_hidden", c.lstm_hidden);
  size_field("modeling_hidden", c.modeling_hidden);
  {
    auto s = reader.fields("config entry", "config");
    if (read_field<std::string>(s, "config key") != "dropout") throw malformed("expected config dropout");
    const auto text = read_field<std::string>(s, "dropout");
    const auto res = std::from_chars(text.data(), text.data() + text.size(), c.dropout);
    if (res.ec != std::errc()) throw malformed("bad dropout " + text);
  }
  size_field("vocab_size", c.vocab_size);
  size_field("max_sentences", c.max_sentences);
  size_field("max_tokens", c.max_tokens);
  {
    auto s = reader.fields("config entry", "config");
    if (read_field<std::string>(s, "config key") != "conv_activation") throw malformed("expected config conv_activation");
    c.conv_activation = parse_activation(read_field<std::string>(s, "conv_activation"));
  }
  {
    std::size_t flag = 0;
    size_field("train_embeddings", flag);
    c.train_embeddings = flag != 0;
  }
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw malformed(e.what());
  }

  auto scale_line = reader.fields("score scale", "scale");
  scorer.scale.min_score = read_field<int>(scale_line, "scale min");
  scorer.scale.max_score = read_field<int>(scale_line, "scale max");

  auto vocab_line = reader.fields("vocabulary header", "vocab");
  const auto vocab_rows = read_field<std::size_t>(vocab_line, "vocabulary size");
  std::vector<std::string> tokens;
  tokens.reserve(vocab_rows);
  for (std::size_t i = 0; i < vocab_rows; ++i) tokens.push_back(reader.line("vocabulary token"));
  try {
    scorer.vocab = Vocabulary::from_tokens(std::move(tokens));
  } catch (const ValidationError& e) {
    throw malformed(e.what());
  }

  if (dtype == "float") {
    scorer.params = read_params<float, T>(reader, c, vocab_rows);
  } else {
    scorer.params = read_params<double, T>(reader, c, vocab_rows);
  }
  if (reader.line("end marker") != "end") throw malformed("missing end marker");
  return scorer;
}

template void save_checkpoint(const EssayScorer<float>&, const std::filesystem::path&);
template void save_checkpoint(const EssayScorer<double>&, const std::filesystem::path&);
template EssayScorer<float> load_checkpoint(const std::filesystem::path&);
template EssayScorer<double> load_checkpoint(const std::filesystem::path&);

}  // namespace coattn
