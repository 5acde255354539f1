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

#include "t2c/evalharness.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <sstream>

namespace t2c {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool starts_with_ci(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[i])) != prefix[i]) return false;
  }
  return true;
}

std::string_view strip_once(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '`') {
    while (!s.empty() && s.front() == '`') s.remove_prefix(1);
    // Optional language tag on the fence line.
    const std::size_t nl = s.find('\n');
    if (nl != std::string_view::npos && trim(s.substr(0, nl)).size() > 0 &&
        starts_with_ci(trim(s.substr(0, nl)), "cypher") && trim(s.substr(0, nl)).size() == 6) {
      s.remove_prefix(nl + 1);
    }
  }
  while (!s.empty() && s.back() == '`') s.remove_suffix(1);
  s = trim(s);
  if (starts_with_ci(s, "cypher:")) s.remove_prefix(7);
  return trim(s);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string fmt_delta(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.2f", v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

}  // namespace

std::string postprocess(std::string_view text) {
  std::string_view cur = text;
  while (true) {
    const std::string_view next = strip_once(cur);
    if (next == cur) return std::string(cur);
    cur = next;
  }
}

std::vector<std::string> rouge_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.push_back(std::move(word));
    word.clear();
  };
  for (char ch : text) {
    const unsigned char c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c) && ch != '_') {
      flush();
      out.emplace_back(1, ch);
    } else {
      word.push_back(ch);
    }
  }
  flush();
  return out;
}

double rouge_l(std::string_view candidate, std::string_view reference) {
  const std::vector<std::string> c = rouge_tokens(candidate), r = rouge_tokens(reference);
  if (c.empty() || r.empty()) return 0.0;
  std::vector<int> prev(r.size() + 1, 0), cur(r.size() + 1, 0);
  for (std::size_t i = 1; i <= c.size(); ++i) {
    for (std::size_t j = 1; j <= r.size(); ++j) {
      cur[j] = c[i - 1] == r[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  const double lcs = prev[r.size()];
  return 2.0 * lcs / static_cast<double>(c.size() + r.size());
}

int exact_match(std::string_view candidate, std::string_view gold, const ql::GraphStore& graph,
                std::string* why) {
  std::string gold_result;
  try {
    gold_result = ql::canonical_result(ql::execute(ql::parse(gold), graph));
  } catch (const std::exception& e) {
    throw ContractError(std::string("gold query failed: ") + e.what());
  }
  try {
    const std::string got = ql::canonical_result(ql::execute(ql::parse(candidate), graph));
    if (got == gold_result) return 1;
    if (why) *why = "result differs";
    return 0;
  } catch (const std::exception& e) {
    if (why) *why = e.what();
    return 0;
  }
}

EvalReport evaluate_model(const std::string& model_name, const Decoder& decoder,
                          const std::vector<Sample>& test, const ql::GraphStore& graph,
                          std::uint64_t seed, std::vector<std::string>* log) {
  require(!test.empty(), "evaluate_model: empty test split");
  EvalReport r;
  r.model = model_name;
  r.seed = seed;
  r.samples = static_cast<int>(test.size());
  std::array<double, 3> rouge_sum{}, em_sum{};
  for (const Sample& s : test) {
    const std::size_t l = index_of(s.language);
    const std::string out = postprocess(decoder(s.prompt));
    rouge_sum[l] += rouge_l(out, s.gold);
    std::string why;
    const int em = exact_match(out, s.gold, graph, &why);
    em_sum[l] += em;
    ++r.counts[l];
    if (!em && why != "result differs") {
      ++r.failures[l];
      if (log) log->push_back("q" + std::to_string(s.question_id) + " " + to_string(s.language) + ": " + why);
    }
  }
  int present = 0;
  for (std::size_t l = 0; l < 3; ++l) {
    if (r.counts[l] == 0) continue;
    ++present;
    r.rouge[l] = rouge_sum[l] / r.counts[l];
    r.em[l] = em_sum[l] / r.counts[l];
    r.avg_rouge += r.rouge[l];
    r.avg_em += r.em[l];
  }
  r.avg_rouge /= present;
  r.avg_em /= present;
  return r;
}

void attach_deltas(EvalReport& report, const EvalReport& base) {
  report.has_deltas = true;
  for (std::size_t l = 0; l < 3; ++l) {
    report.rouge_delta[l] = report.rouge[l] - base.rouge[l];
    report.em_delta[l] = report.em[l] - base.em[l];
  }
  report.avg_rouge_delta = report.avg_rouge - base.avg_rouge;
  report.avg_em_delta = report.avg_em - base.avg_em;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["model"] = model;
  j["seed"] = seed;
  j["samples"] = samples;
  nlohmann::json langs = nlohmann::json::object();
  for (Language lang : kLanguages) {
    const std::size_t l = index_of(lang);
    nlohmann::json e = {{"count", counts[l]}, {"rouge_l", rouge[l]}, {"exact_match", em[l]},
                        {"failures", failures[l]}};
    if (has_deltas) {
      e["rouge_l_delta"] = rouge_delta[l];
      e["exact_match_delta"] = em_delta[l];
    }
    langs[to_string(lang)] = e;
  }
  j["languages"] = langs;
  j["average"] = {{"rouge_l", avg_rouge}, {"exact_match", avg_em}};
  if (has_deltas) j["average"].update({{"rouge_l_delta", avg_rouge_delta}, {"exact_match_delta", avg_em_delta}});
  return j;
}

EvalReport eval_report_from_json(const nlohmann::json& j) {
  EvalReport r;
  try {
    r.model = j.at("model").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.samples = j.at("samples").get<int>();
    for (Language lang : kLanguages) {
      const std::size_t l = index_of(lang);
      const auto& e = j.at("languages").at(to_string(lang));
      r.counts[l] = e.at("count").get<int>();
      r.rouge[l] = e.at("rouge_l").get<double>();
      r.em[l] = e.at("exact_match").get<double>();
      r.failures[l] = e.at("failures").get<int>();
    }
    r.avg_rouge = j.at("average").at("rouge_l").get<double>();
    r.avg_em = j.at("average").at("exact_match").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("evaluation report: ") + e.what());
  }
  return r;
}

namespace {

std::string cell(double v, bool delta, double d) { return delta ? fmt(v) + " " + fmt_delta(d) : fmt(v); }

void table_rows(std::ostringstream& out, const std::vector<EvalReport>& reports, bool rouge) {
  std::size_t name_w = 6;
  for (const auto& r : reports) name_w = std::max(name_w, r.model.size());
  out << pad(rouge ? "ROUGE-L" : "ExactMatch", name_w + 2);
  for (const char* h : {"L1", "L2", "L3", "Avg"}) out << pad(h, 14);
  out << "\n";
  for (const auto& r : reports) {
    out << pad(r.model, name_w + 2);
    for (std::size_t l = 0; l < 3; ++l) {
      out << pad(rouge ? cell(r.rouge[l], r.has_deltas, r.rouge_delta[l])
                       : cell(r.em[l], r.has_deltas, r.em_delta[l]),
                 14);
    }
    out << (rouge ? cell(r.avg_rouge, r.has_deltas, r.avg_rouge_delta)
                  : cell(r.avg_em, r.has_deltas, r.avg_em_delta));
    out << "\n";
  }
}

}  // namespace

std::string EvalReport::to_text() const { return comparison_table({*this}); }

std::string comparison_table(const std::vector<EvalReport>& reports) {
  std::ostringstream out;
  table_rows(out, reports, true);
  out << "\n";
  table_rows(out, reports, false);
  return out.str();
}

std::vector<CostRow> cost_table(std::int64_t per_lang, std::int64_t subset, int max_langs) {
  require(per_lang > 0 && subset > 0 && max_langs > 0, "cost_table: counts must be positive");
  std::vector<CostRow> rows;
  for (int n = 1; n <= max_langs; ++n) {
    rows.push_back({n, n * per_lang, n == 1 ? per_lang : per_lang + n * subset});
  }
  return rows;
}

std::string format_cost_table(const std::vector<CostRow>& rows) {
  std::ostringstream out;
  out << pad("languages", 12) << pad("joint", 12) << "fusion\n";
  for (const auto& r : rows) {
    out << pad(std::to_string(r.languages), 12) << pad(std::to_string(r.joint), 12) << r.fusion << "\n";
  }
  return out.str();
}

}  // namespace t2c
