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

#include "coattn/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "coattn/errors.hpp"

namespace coattn {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

bool is_punct(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u < 128 && std::ispunct(u) != 0;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return fields;
}

bool parse_int(std::string_view text, int& out) {
  text = trim(text);
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size() && !text.empty();
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace

void ScoreScale::validate() const {
  if (max_score <= min_score) {
    throw ValidationError("score range [" + std::to_string(min_score) + ", " + std::to_string(max_score) +
                          "] is empty or inverted");
  }
}

std::optional<ScoreScale> asap_score_range(const std::string& prompt_id) {
  static const std::map<std::string, ScoreScale> kRanges = {
      {"1", {2, 12}}, {"2", {1, 6}}, {"3", {0, 3}}, {"4", {0, 3}},
      {"5", {0, 4}},  {"6", {0, 4}}, {"7", {0, 30}}, {"8", {0, 60}},
  };
  auto it = kRanges.find(prompt_id);
  if (it == kRanges.end()) return std::nullopt;
  return it->second;
}

CorpusFormat parse_corpus_format(const std::string& name) {
  if (name == "canonical" || name == "canonical_tsv") return CorpusFormat::kCanonicalTsv;
  if (name == "asap" || name == "asap_tsv") return CorpusFormat::kAsapTsv;
  throw ConfigError("unknown corpus format '" + name + "' (expected canonical or asap)");
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<EssayRecord> load_corpus(const std::filesystem::path& path, const CorpusOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open corpus " + path.string());
  const std::string source = path.string();
  std::string line;
  if (!std::getline(in, line)) throw ParseError(source, 1, "missing header row");
  strip_cr(line);
  const auto header = split_tabs(line);

  std::size_t col_id = 0, col_prompt = 1, col_score = 2, col_text = 3;
  if (options.format == CorpusFormat::kCanonicalTsv) {
    const std::vector<std::string> expected = {"essay_id", "prompt_id", "score", "text"};
    if (header != expected) throw ParseError(source, 1, "header must be essay_id, prompt_id, score, text");
  } else {
    auto find = [&](const std::string& name) {
      auto it = std::find(header.begin(), header.end(), name);
      if (it == header.end()) throw ParseError(source, 1, "ASAP header lacks column '" + name + "'");
      return static_cast<std::size_t>(it - header.begin());
    };
    col_id = find("essay_id");
    col_prompt = find("essay_set");
    col_text = find("essay");
    col_score = find("domain1_score");
  }
  const std::size_t needed = std::max({col_id, col_prompt, col_score, col_text}) + 1;

  std::vector<EssayRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (trim(line).empty()) continue;
    const auto fields = split_tabs(line);
    if (options.format == CorpusFormat::kCanonicalTsv ? fields.size() != 4 : fields.size() < needed) {
      throw ParseError(source, line_no, "expected " + std::to_string(needed) + " tab-separated fields, found " +
                                            std::to_string(fields.size()));
    }
    EssayRecord rec;
    rec.essay_id = fields[col_id];
    rec.prompt_id = fields[col_prompt];
    rec.text = fields[col_text];
    if (options.prompt_id && rec.prompt_id != *options.prompt_id) continue;
    if (!parse_int(fields[col_score], rec.score)) {
      throw ParseError(source, line_no, "score '" + fields[col_score] + "' is not an integer");
    }
    std::optional<ScoreScale> scale = options.scale;
    if (!scale && options.format == CorpusFormat::kAsapTsv) scale = asap_score_range(rec.prompt_id);
    if (scale && !scale->contains(rec.score)) {
      throw ValidationError(source + ":" + std::to_string(line_no) + ": score " + std::to_string(rec.score) +
                            " outside [" + std::to_string(scale->min_score) + ", " +
                            std::to_string(scale->max_score) + "]");
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  auto emit = [&](std::size_t end) {
    const std::string_view piece = trim(text.substr(start, end - start));
    if (!piece.empty()) out.emplace_back(piece);
    start = end;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if ((c == '.' || c == '!' || c == '?') && (i + 1 == text.size() || is_space(text[i + 1]))) emit(i + 1);
  }
  emit(text.size());
  return out;
}

std::vector<std::string> tokenize(std::string_view sentence) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < sentence.size()) {
    while (i < sentence.size() && is_space(sentence[i])) ++i;
    std::size_t j = i;
    while (j < sentence.size() && !is_space(sentence[j])) ++j;
    std::string_view chunk = sentence.substr(i, j - i);
    i = j;
    if (chunk.empty()) continue;

    std::size_t lead = 0;
    while (lead < chunk.size() && is_punct(chunk[lead])) ++lead;
    std::size_t tail = chunk.size();
    while (tail > lead && is_punct(chunk[tail - 1])) --tail;

    for (std::size_t k = 0; k < lead; ++k) out.emplace_back(1, chunk[k]);
    if (tail > lead) {
      std::string core(chunk.substr(lead, tail - lead));
      const bool has_digit = std::any_of(core.begin(), core.end(),
                                         [](char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; });
      if (has_digit) {
        out.emplace_back(kNumToken);
      } else {
        for (char& c : core) {
          if (static_cast<unsigned char>(c) < 128) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
        out.push_back(std::move(core));
      }
    }
    for (std::size_t k = tail; k < chunk.size(); ++k) out.emplace_back(1, chunk[k]);
  }
  return out;
}

// ---------------------------------------------------------------- vocabulary

Vocabulary::Vocabulary() : tokens_{std::string(kPadToken), std::string(kUnkToken)} {
  index_.emplace(tokens_[0], kPadId);
  index_.emplace(tokens_[1], kUnkId);
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < 2 || tokens[0] != kPadToken || tokens[1] != kUnkToken) {
    throw ValidationError("vocabulary must start with " + std::string(kPadToken) + " and " + std::string(kUnkToken));
  }
  Vocabulary v;
  v.tokens_ = std::move(tokens);
  v.index_.clear();
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    if (!v.index_.emplace(v.tokens_[i], static_cast<std::int32_t>(i)).second) {
      throw ValidationError("duplicate vocabulary token '" + v.tokens_[i] + "'");
    }
  }
  return v;
}

Vocabulary Vocabulary::build(std::span<const std::string> texts, std::size_t cap) {
  if (cap < 2) throw ValidationError("vocabulary cap must be at least 2");
  std::unordered_map<std::string, std::size_t> counts;
  for (const std::string& text : texts) {
    for (const std::string& sentence : split_sentences(text)) {
      for (std::string& tok : tokenize(sentence)) ++counts[std::move(tok)];
    }
  }
  counts.erase(std::string(kPadToken));
  counts.erase(std::string(kUnkToken));
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<std::string> tokens = {std::string(kPadToken), std::string(kUnkToken)};
  for (std::size_t i = 0; i < ranked.size() && tokens.size() < cap; ++i) tokens.push_back(ranked[i].first);
  return from_tokens(std::move(tokens));
}

std::int32_t Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnkId : it->second;
}

Vocabulary build_vocab(std::span<const EssayRecord> train, const std::string& article, std::size_t cap) {
  std::vector<std::string> texts;
  texts.reserve(train.size() + 1);
  for (const EssayRecord& r : train) texts.push_back(r.text);
  texts.push_back(article);
  return Vocabulary::build(texts, cap);
}

EncodedDocument encode_document(std::string_view text, const Vocabulary& vocab, const ModelConfig& config) {
  EncodedDocument doc;
  doc.max_sentences = config.max_sentences;
  doc.max_tokens = config.max_tokens;
  doc.kernel = config.kernel;
  if (doc.max_tokens < doc.kernel) throw ConfigError("max_tokens must be at least the convolution kernel");
  const std::size_t windows = doc.windows_per_row();
  doc.ids.assign(doc.max_sentences * doc.max_tokens, kPadId);
  doc.sentence_mask.assign(doc.max_sentences, 0);
  doc.sentence_length.assign(doc.max_sentences, 0);
  doc.window_mask.assign(doc.max_sentences * windows, 0);

  for (const std::string& sentence : split_sentences(text)) {
    if (doc.sentences.size() == doc.max_sentences) break;
    const auto tokens = tokenize(sentence);
    if (tokens.empty()) continue;
    const std::size_t s = doc.sentences.size();
    const std::size_t len = std::min(tokens.size(), doc.max_tokens);
    for (std::size_t w = 0; w < len; ++w) {
      const std::int32_t id = vocab.id(tokens[w]);
      if (id < 0 || static_cast<std::size_t>(id) >= vocab.size() || id == kPadId) {
        throw EncodingError("token '" + tokens[w] + "' maps to invalid id " + std::to_string(id));
      }
      doc.ids[s * doc.max_tokens + w] = id;
    }
    doc.sentence_mask[s] = 1;
    doc.sentence_length[s] = len;
    const std::size_t valid = std::max(len, doc.kernel) - doc.kernel + 1;
    for (std::size_t q = 0; q < valid; ++q) doc.window_mask[s * windows + q] = 1;
    doc.sentences.push_back(sentence);
  }
  if (doc.sentences.empty()) throw DegenerateInputError("document has no tokens");
  return doc;
}

double scale_score(int score, const ScoreScale& scale) {
  scale.validate();
  if (!scale.contains(score)) {
    throw ValidationError("score " + std::to_string(score) + " outside [" + std::to_string(scale.min_score) + ", " +
                          std::to_string(scale.max_score) + "]");
  }
  return static_cast<double>(score - scale.min_score) / static_cast<double>(scale.max_score - scale.min_score);
}

int unscale_score(double y, const ScoreScale& scale) {
  scale.validate();
  if (!(y >= 0.0 && y <= 1.0)) throw ValidationError("scaled prediction " + std::to_string(y) + " outside [0, 1]");
  const double span = static_cast<double>(scale.max_score - scale.min_score);
  const int rounded = static_cast<int>(std::floor(y * span + 0.5));
  return std::clamp(rounded + scale.min_score, scale.min_score, scale.max_score);
}

EmbeddingLoad load_embeddings(const std::filesystem::path& path, const Vocabulary& vocab, std::size_t dim,
                              std::mt19937_64& rng) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open embeddings " + path.string());
  EmbeddingLoad result;
  result.matrix = Tensor<float>({vocab.size(), dim});
  std::uniform_real_distribution<double> dist(-0.05, 0.05);
  for (std::size_t i = 0; i < result.matrix.size(); ++i) result.matrix[i] = static_cast<float>(dist(rng));

  std::vector<std::uint8_t> seen(vocab.size(), 0);
  std::vector<float> values(dim);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    std::string_view rest = trim(line);
    if (rest.empty()) continue;
    const std::size_t sp = rest.find(' ');
    const std::string token(rest.substr(0, sp));
    std::size_t count = 0;
    rest = sp == std::string_view::npos ? std::string_view() : rest.substr(sp + 1);
    while (!rest.empty()) {
      while (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
      if (rest.empty()) break;
      std::size_t end = rest.find(' ');
      if (end == std::string_view::npos) end = rest.size();
      float v = 0.0f;
      const auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + end, v);
      if (ec != std::errc() || ptr != rest.data() + end) {
        throw ParseError(path.string(), line_no, "bad number '" + std::string(rest.substr(0, end)) + "'");
      }
      if (count < dim) values[count] = v;
      ++count;
      rest.remove_prefix(end);
    }
    if (count != dim) {
      throw ParseError(path.string(), line_no,
                       "expected " + std::to_string(dim) + " values, found " + std::to_string(count));
    }
    if (!vocab.contains(token)) continue;
    const auto id = static_cast<std::size_t>(vocab.id(token));
    if (id == static_cast<std::size_t>(kPadId) || seen[id]) continue;
    seen[id] = 1;
    ++result.hits;
    std::copy(values.begin(), values.end(), &result.matrix[id * dim]);
  }
  for (std::size_t j = 0; j < dim; ++j) result.matrix.at(kPadId, j) = 0.0f;
  const std::size_t candidates = vocab.size() > 2 ? vocab.size() - 2 : 0;
  result.coverage = candidates ? static_cast<double>(result.hits) / static_cast<double>(candidates) : 0.0;
  return result;
}

std::vector<FoldSplit> make_folds(std::size_t record_count, std::size_t n_folds, std::uint64_t seed) {
  if (n_folds < 3) throw ValidationError("need at least 3 folds for train/dev/test splits");
  if (record_count < n_folds) {
    throw ValidationError("cannot make " + std::to_string(n_folds) + " folds from " + std::to_string(record_count) +
                          " records");
  }
  std::vector<std::size_t> order(record_count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> chunks(n_folds);
  for (std::size_t c = 0; c < n_folds; ++c) {
    const std::size_t lo = c * record_count / n_folds;
    const std::size_t hi = (c + 1) * record_count / n_folds;
    chunks[c].assign(order.begin() + static_cast<std::ptrdiff_t>(lo), order.begin() + static_cast<std::ptrdiff_t>(hi));
  }
  std::vector<FoldSplit> folds(n_folds);
  for (std::size_t f = 0; f < n_folds; ++f) {
    folds[f].test = chunks[f];
    folds[f].dev = chunks[(f + 1) % n_folds];
    for (std::size_t c = 0; c < n_folds; ++c) {
      if (c == f || c == (f + 1) % n_folds) continue;
      folds[f].train.insert(folds[f].train.end(), chunks[c].begin(), chunks[c].end());
    }
  }
  return folds;
}

}  // namespace coattn
