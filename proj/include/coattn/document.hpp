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

#ifndef COATTN_DOCUMENT_HPP
#define COATTN_DOCUMENT_HPP

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace coattn {

inline constexpr std::int32_t kPadId = 0;
inline constexpr std::int32_t kUnkId = 1;

// An essay or article as a fixed max_sentences x max_tokens grid of token ids.
// Rows beyond num_sentences() and columns beyond a sentence's length hold
// kPadId. A sentence with fewer than `kernel` tokens still owns one valid
// convolution window; its tail is padding that embeds to zeros.
struct EncodedDocument {
  std::size_t max_sentences = 0;
  std::size_t max_tokens = 0;
  std::size_t kernel = 1;
  std::vector<std::int32_t> ids;             // max_sentences * max_tokens
  std::vector<std::uint8_t> sentence_mask;   // max_sentences
  std::vector<std::size_t> sentence_length;  // real tokens per row, 0 on padding
  std::vector<std::uint8_t> window_mask;     // max_sentences * (max_tokens - kernel + 1)
  std::vector<std::string> sentences;        // source text of each real sentence

  std::size_t num_sentences() const { return sentences.size(); }
  std::size_t windows_per_row() const { return max_tokens - kernel + 1; }
  std::int32_t id(std::size_t s, std::size_t w) const { return ids[s * max_tokens + w]; }
  // Longest real sentence, never below the kernel.
  std::size_t active_width() const;
};

}  // namespace coattn

#endif  // COATTN_DOCUMENT_HPP
