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

// Seeded synthetic parallel corpus: question templates over a small
// Article/Company/Person graph, rendered in three constructed languages that
// share proper nouns and numbers but no other words.
//
//   L1  SVO, English-like lexicon
//   L2  SVO, distinct function words and noun articles
//   L3  SOV, agglutinative suffixes, courtesy marker at the end

#ifndef T2C_CORPUS_HPP_
#define T2C_CORPUS_HPP_

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "t2c/numerics.hpp"
#include "t2c/querylang.hpp"

namespace t2c {

enum class Language { kL1 = 0, kL2 = 1, kL3 = 2 };
inline constexpr std::array<Language, 3> kLanguages = {Language::kL1, Language::kL2,
                                                       Language::kL3};

std::string to_string(Language lang);
// Throws ConfigError for anything but "L1", "L2", "L3".
Language parse_language(std::string_view text);
inline std::size_t index_of(Language lang) { return static_cast<std::size_t>(lang); }

struct Schema {
  struct LabelSpec {
    std::string label;
    std::vector<std::string> keys;
  };
  struct RelSpec {
    std::string type;
    std::string from;
    std::string to;
  };
  std::vector<LabelSpec> labels;
  std::vector<RelSpec> relationships;

  // Compact token sequence used in the prompt's schema slot.
  std::string prompt_string() const;
};

Schema default_schema();

struct Sample {
  std::int64_t question_id = 0;
  Language language = Language::kL1;
  std::string question;
  std::string gold;
  std::string prompt;
  std::string split;    // "train" | "test"
  std::string sharing;  // "shared-all" | "pair(Li,Lj)" | "unique"
  std::string template_name;

  bool operator==(const Sample&) const = default;
};

// Per-language counts; the defaults are the benchmark split at 1/10 scale.
struct SplitSpec {
  int shared_all = 675;
  int pair = 150;  // per language pair
  int unique = 380;
  int test = 480;  // parallel test questions (each in all three languages)
  int fusion_per_lang = 250;

  int train_per_language() const { return shared_all + 2 * pair + unique; }
  int distinct_questions() const { return test + shared_all + 3 * pair + 3 * unique; }
  void validate() const;
};

struct ParallelCorpus {
  SplitSpec spec;
  std::vector<Sample> samples;

  std::vector<Sample> select(Language lang, std::string_view split) const;
  std::vector<Sample> train(Language lang) const { return select(lang, "train"); }
  std::vector<Sample> test(Language lang) const { return select(lang, "test"); }

  std::string to_jsonl() const;
  static ParallelCorpus from_jsonl(std::string_view text, const SplitSpec& spec);
};

// Field order: instruction, schema, question, output cue.
std::string make_prompt(const Schema& schema, std::string_view question);

// size >= 10. Node mix 1/5 companies, 2/5 persons, 2/5 articles; every company
// has an employee and a mention, every person authored an article and every
// city hosts a company, so entity-anchored questions have answers.
ql::GraphStore gen_graph(const Schema& schema, int size, Rng& rng);

// Throws ConfigError when the template pool over this graph cannot supply
// spec.distinct_questions() questions with at least 80% non-empty answers.
ParallelCorpus gen_corpus(const Schema& schema, const SplitSpec& spec, const ql::GraphStore& graph,
                          Rng& rng);

// per_lang shared-all training questions, each taken in every language.
// Result is ordered by question id, then language.
std::vector<Sample> fusion_subset(const ParallelCorpus& corpus, int per_lang, Rng& rng);

// Words of a question that are neither quoted proper nouns nor numbers.
std::vector<std::string> lexicon_words(std::string_view question);

// Number of template families the generator draws from.
std::size_t template_count();

struct TemplateQuery {
  std::string template_name;
  std::string gold;
};

// Every template instantiated with every slot value the graph offers, in
// template order; golds are printed in canonical form.
std::vector<TemplateQuery> template_queries(const ql::GraphStore& graph);

}  // namespace t2c

#endif  // T2C_CORPUS_HPP_
