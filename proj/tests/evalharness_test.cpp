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

#include "doctest.h"
#include "oracles.hpp"
#include "t2c/evalharness.hpp"

using namespace t2c;
using namespace t2c::testing;

namespace {

ql::GraphStore small_graph() {
  ql::GraphStore g;
  g.add_node({1, "Company", {{"name", std::string("Acme")}, {"sales", std::int64_t{50}}}});
  g.add_node({2, "Company", {{"name", std::string("Bolt")}, {"sales", std::int64_t{70}}}});
  g.add_node({3, "Company", {{"name", std::string("Cora")}, {"sales", std::int64_t{20}}}});
  return g;
}

std::vector<Sample> samples() {
  std::vector<Sample> out;
  const std::vector<std::string> golds = {"MATCH (c:Company) RETURN c.name",
                                          "MATCH (c:Company {name: \"Acme\"}) RETURN c.sales"};
  for (int l = 0; l < 3; ++l) {
    for (std::size_t i = 0; i < golds.size(); ++i) {
      Sample s;
      s.question_id = static_cast<std::int64_t>(i);
      s.language = static_cast<Language>(l);
      s.question = "q" + std::to_string(i);
      s.prompt = "prompt " + std::to_string(l) + " " + std::to_string(i);
      s.gold = golds[i];
      s.split = "test";
      out.push_back(s);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("postprocess") {
  CHECK(postprocess("cypher: MATCH (a) RETURN a") == "MATCH (a) RETURN a");
  CHECK(postprocess("MATCH (a) RETURN a") == "MATCH (a) RETURN a");
  CHECK(postprocess("```\nMATCH (a) RETURN a\n```") == "MATCH (a) RETURN a");
  CHECK(postprocess("  CYPHER:  MATCH (a) RETURN a \n") == "MATCH (a) RETURN a");
  for (const std::string s : {"cypher: ```cypher: x```", "  ``` y", "plain", ""})
    CHECK(postprocess(postprocess(s)) == postprocess(s));
}

TEST_CASE("rouge-l") {
  CHECK(rouge_l("MATCH (a) RETURN a", "MATCH (a) RETURN a") == 1.0);
  CHECK(rouge_l("foo bar", "baz qux") == 0.0);
  CHECK(rouge_l("", "x") == 0.0);
  CHECK(rouge_l("x", "") == 0.0);
  CHECK(rouge_tokens("c.name)") == std::vector<std::string>{"c", ".", "name", ")"});
  CHECK(rouge_tokens("has_part") == std::vector<std::string>{"has_part"});
  const std::string c = "MATCH ( a ) RETURN a", r = "MATCH ( a ) RETURN a . name";
  CHECK(rouge_l(c, r) == doctest::Approx(oracle_rouge_l(c, r)).epsilon(1e-12));
  CHECK(rouge_l(c, r) == doctest::Approx(12.0 / 14.0));
  CHECK(rouge_l("match (a)", "MATCH (a)") < 1.0);
  Rng rng(1);
  const std::vector<std::string> words = {"MATCH", "(", "a", ")", "RETURN", "x", "{", "name"};
  for (int k = 0; k < 200; ++k) {
    std::string a, b;
    for (std::uint64_t i = rng.below(8); i > 0; --i) a += words[rng.below(words.size())] + " ";
    for (std::uint64_t i = rng.below(8); i > 0; --i) b += words[rng.below(words.size())] + " ";
    const double v = rouge_l(a, b);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    CHECK(v == doctest::Approx(oracle_rouge_l(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("exact match") {
  const ql::GraphStore g = small_graph();
  const std::string gold = "MATCH (c:Company) RETURN c.name ORDER BY c.sales ASC";
  CHECK(exact_match(gold, gold, g) == 1);
  CHECK(exact_match("MATCH (c:Company) RETURN c.name ORDER BY c.sales DESC", gold, g) == 1);
  CHECK(exact_match("MATCH (c:Company) RETURN c.name ORDER BY c.sales DESC LIMIT 2", gold, g) == 0);
  std::string why;
  CHECK(exact_match("MATCH (c:Company RETURN", gold, g, &why) == 0);
  CHECK(!why.empty());
  why.clear();
  CHECK(exact_match("MATCH (c:Company) RETURN d.name", gold, g, &why) == 0);
  CHECK(!why.empty());
}

TEST_CASE("evaluate_model with oracle decoders") {
  const ql::GraphStore g = small_graph();
  const std::vector<Sample> test = samples();
  std::map<std::string, std::string> gold_of;
  for (const auto& s : test) gold_of[s.prompt] = s.gold;
  const EvalReport echo =
      evaluate_model("echo", [&](const std::string& p) { return "cypher: " + gold_of.at(p); }, test, g, 3);
  CHECK(echo.samples == 6);
  CHECK(echo.seed == 3);
  for (int l = 0; l < 3; ++l) {
    CHECK(echo.rouge[l] == 1.0);
    CHECK(echo.em[l] == 1.0);
    CHECK(echo.counts[l] == 2);
  }
  CHECK(echo.avg_rouge == 1.0);
  CHECK(echo.avg_em == 1.0);
  const EvalReport empty = evaluate_model("empty", [](const std::string&) { return std::string(); }, test, g, 3);
  CHECK(empty.avg_rouge == 0.0);
  CHECK(empty.avg_em == 0.0);
  CHECK(empty.failures[0] == 2);

  EvalReport half = evaluate_model(
      "half", [&](const std::string& p) { return p.back() == '0' ? gold_of.at(p) : std::string("junk"); }, test, g, 3);
  CHECK(half.avg_em == doctest::Approx(0.5));
  CHECK(half.avg_em == doctest::Approx((half.em[0] + half.em[1] + half.em[2]) / 3.0));
  attach_deltas(half, empty);
  CHECK(half.has_deltas);
  CHECK(half.em_delta[1] == doctest::Approx(0.5));
  CHECK(half.to_text().find("+0.50") != std::string::npos);
  const EvalReport back = eval_report_from_json(half.to_json());
  CHECK(back.em == half.em);
  CHECK(back.avg_rouge == half.avg_rouge);
  const std::string table = comparison_table({empty, half, echo});
  CHECK(table.find("echo") != std::string::npos);
  CHECK(table.find("half") != std::string::npos);
}

TEST_CASE("cost table") {
  const std::vector<CostRow> rows = cost_table(12000, 2500, 4);
  REQUIRE(rows.size() == 4);
  const std::int64_t joint[4] = {12000, 24000, 36000, 48000};
  const std::int64_t fusion[4] = {12000, 17000, 19500, 22000};
  for (int i = 0; i < 4; ++i) {
    CHECK(rows[i].languages == i + 1);
    CHECK(rows[i].joint == joint[i]);
    CHECK(rows[i].fusion == fusion[i]);
  }
  CHECK(format_cost_table(rows).find("19500") != std::string::npos);
}
