// Copyright 2026 The t2c-fusion Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef T2C_VOCAB_HPP_
#define T2C_VOCAB_HPP_

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace t2c {

// Closed word-level vocabulary. Ids 0..3 are PAD, BOS, EOS, UNK.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  Vocab();
  // tokens[0..3] must be the special spellings; entries must be unique.
  explicit Vocab(std::vector<std::string> tokens);

  // Specials followed by every whitespace-separated word of texts, sorted.
  static Vocab build(const std::vector<std::string>& texts);

  int id(std::string_view word) const;
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

// BOS followed by one id per whitespace-separated word; unknown words map to UNK.
std::vector<int> tokenize(std::string_view text, const Vocab& vocab);

// Space-joined words; PAD/BOS/EOS are dropped.
std::string detokenize(std::span<const int> ids, const Vocab& vocab);

}  // namespace t2c

#endif  // T2C_VOCAB_HPP_
