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

// Post-processing, ROUGE-L, execution exact match, evaluation reports and the
// incremental training-cost table.

#ifndef T2C_EVALHARNESS_HPP_
#define T2C_EVALHARNESS_HPP_

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "t2c/corpus.hpp"
#include "t2c/querylang.hpp"

namespace t2c {

// Strips surrounding whitespace, code fences and a leading "cypher:" marker
// (any case). Idempotent.
std::string postprocess(std::string_view text);

// Whitespace split with every punctuation character (except '_') as its own
// token. Case is preserved.
std::vector<std::string> rouge_tokens(std::string_view text);

// LCS F1 = 2 * lcs / (|candidate| + |reference|); 0 if either side is empty.
double rouge_l(std::string_view candidate, std::string_view reference);

// 1 iff the candidate parses, executes and yields the gold canonical result.
// Failures score 0; their reason is written to *why when given.
int exact_match(std::string_view candidate, std::string_view gold, const ql::GraphStore& graph,
                std::string* why = nullptr);

using Decoder = std::function<std::string(const std::string& prompt)>;

struct EvalReport {
  std::string model;
  std::uint64_t seed = 0;
  int samples = 0;
  std::array<int, 3> counts{};
  std::array<double, 3> rouge{};
  std::array<double, 3> em{};
  double avg_rouge = 0.0;
  double avg_em = 0.0;
  std::array<int, 3> failures{};  // candidates that did not parse or execute
  bool has_deltas = false;
  std::array<double, 3> rouge_delta{};
  std::array<double, 3> em_delta{};
  double avg_rouge_delta = 0.0;
  double avg_em_delta = 0.0;

  nlohmann::json to_json() const;
  // Aligned table with one row per metric; deltas as "+0.xx".
  std::string to_text() const;
};

// Inverse of EvalReport::to_json for the score fields.
EvalReport eval_report_from_json(const nlohmann::json& j);

EvalReport evaluate_model(const std::string& model_name, const Decoder& decoder,
                          const std::vector<Sample>& test, const ql::GraphStore& graph,
                          std::uint64_t seed, std::vector<std::string>* log = nullptr);

// Fills the delta fields of report relative to base.
void attach_deltas(EvalReport& report, const EvalReport& base);

// Side-by-side table of several reports, one row per model.
std::string comparison_table(const std::vector<EvalReport>& reports);

struct CostRow {
  int languages = 0;
  std::int64_t joint = 0;
  std::int64_t fusion = 0;
};

// joint = n * per_lang; fusion = per_lang for n = 1, else per_lang + n * subset.
std::vector<CostRow> cost_table(std::int64_t per_lang, std::int64_t subset, int max_langs);
std::string format_cost_table(const std::vector<CostRow>& rows);

}  // namespace t2c

#endif  // T2C_EVALHARNESS_HPP_
