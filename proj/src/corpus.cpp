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

#include "t2c/corpus.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "t2c/errors.hpp"

namespace t2c {

std::string to_string(Language lang) {
  switch (lang) {
    case Language::kL1:
      return "L1";
    case Language::kL2:
      return "L2";
    case Language::kL3:
      return "L3";
  }
  return "?";
}

Language parse_language(std::string_view text) {
  if (text == "L1") return Language::kL1;
  if (text == "L2") return Language::kL2;
  if (text == "L3") return Language::kL3;
  throw ConfigError("unknown language '" + std::string(text) + "' (expected L1, L2 or L3)");
}

Schema default_schema() {
  Schema s;
  s.labels = {{"Article", {"title", "year"}},
              {"Company", {"name", "sales", "city"}},
              {"Person", {"name", "age"}}};
  s.relationships = {{"MENTIONS", "Article", "Company"},
                     {"WORKS_AT", "Person", "Company"},
                     {"AUTHORED", "Person", "Article"}};
  return s;
}

std::string Schema::prompt_string() const {
  std::string out;
  for (const auto& l : labels) {
    if (!out.empty()) out += ' ';
    out += l.label;
    for (const auto& k : l.keys) out += ' ' + k;
  }
  for (const auto& r : relationships) out += ' ' + r.type;
  return out;
}

void SplitSpec::validate() const {
  if (shared_all < 0 || pair < 0 || unique < 0 || test < 0 || fusion_per_lang < 0) {
    throw ConfigError("split counts must be non-negative");
  }
  if (fusion_per_lang > shared_all) {
    throw ConfigError("fusion subset (" + std::to_string(fusion_per_lang) +
                      " per language) exceeds the shared-all pool (" + std::to_string(shared_all) +
                      ")");
  }
}

std::string make_prompt(const Schema& schema, std::string_view question) {
  return "Generate Cypher statement to query a graph database . Schema : " +
         schema.prompt_string() + " Question : " + std::string(question) + " Cypher output :";
}

std::vector<std::string> lexicon_words(std::string_view question) {
  std::vector<std::string> out;
  std::istringstream in{std::string(question)};
  std::string w;
  while (in >> w) {
    if (w.front() == '"') continue;
    if (std::all_of(w.begin(), w.end(), [](unsigned char c) { return std::isdigit(c); })) continue;
    out.push_back(w);
  }
  return out;
}

namespace {

// ---------------------------------------------------------------------------
// Graph generation

const std::vector<std::string> kCities = {"Paris", "Lagos", "Lima",  "Oslo",
                                          "Quito", "Hanoi", "Cairo", "Dublin"};
const std::vector<std::string> kSyllables = {"ka", "lo", "mi", "ra", "ve", "to", "zu", "ne",
                                             "sa", "di", "po", "len", "mar", "tor", "vik",
                                             "bel", "cor", "dan", "fel", "gor", "hal", "jin"};

std::string capitalize(std::string s) {
  s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

std::string pseudo_word(Rng& rng, int syllables) {
  std::string w;
  for (int i = 0; i < syllables; ++i) w += kSyllables[rng.below(kSyllables.size())];
  return capitalize(w);
}

std::vector<std::string> unique_names(Rng& rng, int count, std::set<std::string>& used, bool title) {
  std::vector<std::string> out;
  while (static_cast<int>(out.size()) < count) {
    std::string name = title ? pseudo_word(rng, 2) + "_" + pseudo_word(rng, 2)
                             : pseudo_word(rng, 2 + static_cast<int>(rng.below(2)));
    if (used.insert(name).second) out.push_back(name);
  }
  return out;
}

}  // namespace

ql::GraphStore gen_graph(const Schema& schema, int size, Rng& rng) {
  require(size >= 10, "gen_graph: size must be at least 10");
  (void)schema;
  const int n_company = std::max(2, size / 5);
  const int n_person = (size - n_company) / 2;
  const int n_article = size - n_company - n_person;

  std::set<std::string> used(kCities.begin(), kCities.end());
  const auto companies = unique_names(rng, n_company, used, false);
  const auto persons = unique_names(rng, n_person, used, false);
  const auto titles = unique_names(rng, n_article, used, true);

  ql::GraphStore g;
  std::int64_t next_id = 0;
  std::vector<std::int64_t> company_ids, person_ids, article_ids;

  // Distinct sales figures; every city hosts at least one company when there
  // are enough companies.
  std::vector<std::int64_t> sales;
  {
    std::set<std::int64_t> seen;
    while (static_cast<int>(sales.size()) < n_company) {
      const auto v = static_cast<std::int64_t>(100 + rng.below(900));
      if (seen.insert(v).second) sales.push_back(v);
    }
  }
  for (int i = 0; i < n_company; ++i) {
    const std::string& city =
        i < static_cast<int>(kCities.size()) ? kCities[i] : kCities[rng.below(kCities.size())];
    g.add_node({next_id, "Company", {{"name", companies[i]}, {"sales", sales[i]}, {"city", city}}});
    company_ids.push_back(next_id++);
  }
  for (int i = 0; i < n_person; ++i) {
    g.add_node({next_id, "Person",
                {{"name", persons[i]}, {"age", static_cast<std::int64_t>(22 + rng.below(44))}}});
    person_ids.push_back(next_id++);
  }
  for (int i = 0; i < n_article; ++i) {
    g.add_node({next_id, "Article",
                {{"title", titles[i]}, {"year", static_cast<std::int64_t>(2010 + rng.below(15))}}});
    article_ids.push_back(next_id++);
  }

  auto shuffled = [&rng](std::vector<std::int64_t> ids) {
    rng.shuffle(ids);
    return ids;
  };

  // WORKS_AT: one employer per person, every company employs someone.
  {
    const auto order = shuffled(company_ids);
    for (int i = 0; i < n_person; ++i) {
      const std::int64_t c = i < n_company ? order[i] : company_ids[rng.below(company_ids.size())];
      g.add_edge({person_ids[i], "WORKS_AT", c});
    }
  }
  // AUTHORED: every article has an author, every person authored something
  // while articles last; some articles get a second author.
  {
    const auto order = shuffled(person_ids);
    for (int i = 0; i < n_article; ++i) {
      g.add_edge({order[i % n_person], "AUTHORED", article_ids[i]});
      if (rng.uniform() < 0.3) {
        g.add_edge({person_ids[rng.below(person_ids.size())], "AUTHORED", article_ids[i]});
      }
    }
  }
  // MENTIONS: one to three companies per article, every company mentioned.
  {
    const auto order = shuffled(company_ids);
    for (int i = 0; i < n_article; ++i) {
      g.add_edge({article_ids[i], "MENTIONS", order[i % n_company]});
      const int extra = static_cast<int>(rng.below(3));
      for (int e = 0; e < extra; ++e) {
        g.add_edge({article_ids[i], "MENTIONS", company_ids[rng.below(company_ids.size())]});
      }
    }
  }
  return g;
}

namespace {

// ---------------------------------------------------------------------------
// Templates

enum class SlotKind { kCompany, kPerson, kArticle, kCity, kYear, kTopK, kTopKOrdered };

struct TemplateDef {
  const char* name;
  SlotKind slot;
  const char* gold;  // {X} quoted name, {N} number, {K} count, {DIR} ASC/DESC
  std::array<const char*, 3> surface;
  std::array<const char*, 3> surface_ascending;  // kTopKOrdered only
};

const std::vector<TemplateDef>& templates() {
  static const std::vector<TemplateDef> defs = {
      {"company_sales", SlotKind::kCompany, "MATCH (c:Company {name: {X}}) RETURN c.sales",
       {"what are the sales of company {X}", "cuales son las ventas de la empresa {X}",
        "{X} sirketinin satislari nedir"},
       {}},
      {"company_city", SlotKind::kCompany, "MATCH (c:Company {name: {X}}) RETURN c.city",
       {"in which city is company {X} located", "en que ciudad esta la empresa {X}",
        "{X} sirketi hangi sehirde bulunur"},
       {}},
      {"person_age", SlotKind::kPerson, "MATCH (p:Person {name: {X}}) RETURN p.age",
       {"how old is person {X}", "cuantos anos tiene la persona {X}", "{X} kisisi kac yasindadir"},
       {}},
      {"article_year", SlotKind::kArticle, "MATCH (a:Article {title: {X}}) RETURN a.year",
       {"in which year was article {X} published", "en que ano se publico el articulo {X}",
        "{X} makalesi hangi yilda yayinlandi"},
       {}},
      {"articles_mentioning_company", SlotKind::kCompany,
       "MATCH (a:Article)-[:MENTIONS]->(c:Company {name: {X}}) RETURN a.title",
       {"which articles mention company {X}", "que articulos mencionan la empresa {X}",
        "{X} sirketinden bahseden makaleler hangileridir"},
       {}},
      {"count_articles_mentioning_company", SlotKind::kCompany,
       "MATCH (a:Article)-[:MENTIONS]->(c:Company {name: {X}}) RETURN count(a)",
       {"how many articles mention company {X}", "cuantos articulos mencionan la empresa {X}",
        "{X} sirketinden kac makale bahseder"},
       {}},
      {"people_at_company", SlotKind::kCompany,
       "MATCH (p:Person)-[:WORKS_AT]->(c:Company {name: {X}}) RETURN p.name",
       {"who works at company {X}", "quien trabaja en la empresa {X}",
        "{X} sirketinde kim calisir"},
       {}},
      {"employer_of_person", SlotKind::kPerson,
       "MATCH (p:Person {name: {X}})-[:WORKS_AT]->(c:Company) RETURN c.name",
       {"which company does person {X} work for", "para que empresa trabaja la persona {X}",
        "{X} kisisi hangi sirkette calisir"},
       {}},
      {"articles_by_person", SlotKind::kPerson,
       "MATCH (p:Person {name: {X}})-[:AUTHORED]->(a:Article) RETURN a.title",
       {"which articles were written by person {X}", "que articulos escribio la persona {X}",
        "{X} kisisinin yazdigi makaleler hangileridir"},
       {}},
      {"companies_in_article", SlotKind::kArticle,
       "MATCH (a:Article {title: {X}})-[:MENTIONS]->(c:Company) RETURN c.name",
       {"which companies are mentioned in article {X}",
        "que empresas se mencionan en el articulo {X}", "{X} makalesinde hangi sirketler geciyor"},
       {}},
      {"authors_of_article", SlotKind::kArticle,
       "MATCH (p:Person)-[:AUTHORED]->(a:Article {title: {X}}) RETURN p.name",
       {"who wrote article {X}", "quien escribio el articulo {X}", "{X} makalesini kim yazdi"},
       {}},
      {"companies_in_city", SlotKind::kCity, "MATCH (c:Company {city: {X}}) RETURN c.name",
       {"which companies are located in city {X}", "que empresas estan en la ciudad {X}",
        "{X} sehrindeki sirketler hangileridir"},
       {}},
      {"top_companies_by_sales", SlotKind::kTopKOrdered,
       "MATCH (c:Company) RETURN c.name ORDER BY c.sales {DIR} LIMIT {K}",
       {"list the {K} companies with the highest sales", "lista las {K} empresas con mayores ventas",
        "satislari azami olan {K} sirketi listele"},
       {"list the {K} companies with the lowest sales", "lista las {K} empresas con menores ventas",
        "satislari asgari olan {K} sirketi listele"}},
      {"top_companies_by_mentions", SlotKind::kTopK,
       "MATCH (a:Article)-[:MENTIONS]->(c:Company) RETURN c.name, count(a) ORDER BY count(a) DESC "
       "LIMIT {K}",
       {"which {K} companies are mentioned in the most articles",
        "cuales {K} empresas aparecen en mas articulos", "azami makalede gecen {K} sirketi listele"},
       {}},
      {"count_articles_by_person", SlotKind::kPerson,
       "MATCH (p:Person {name: {X}})-[:AUTHORED]->(a:Article) RETURN count(a)",
       {"how many articles did person {X} write", "cuantos articulos escribio la persona {X}",
        "{X} kisisi kac makale yazdi"},
       {}},
      {"articles_in_year", SlotKind::kYear, "MATCH (a:Article {year: {N}}) RETURN a.title",
       {"which articles were published in year {N}", "que articulos se publicaron en el ano {N}",
        "{N} yilinda yayinlanan makaleler hangileridir"},
       {}},
  };
  return defs;
}

// Courtesy variants: prefixes for the SVO languages, suffix for L3.
const std::array<std::array<const char*, 4>, 3> kVariants = {{
    {"", "please", "tell me", "i wonder"},
    {"", "por favor", "digame", "quisiera saber"},
    {"", "lutfen", "soyle bana", "merak ediyorum"},
}};

struct SlotValue {
  std::string name;
  std::int64_t number = 0;
  bool ascending = false;
};

struct Candidate {
  std::size_t tmpl;
  SlotValue slot;
  int variant;
  std::string gold;
  bool nonempty;
};

void replace_all(std::string& s, const std::string& from, const std::string& to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

std::string fill(std::string text, const SlotValue& v) {
  replace_all(text, "{X}", "\"" + v.name + "\"");
  replace_all(text, "{N}", std::to_string(v.number));
  replace_all(text, "{K}", std::to_string(v.number));
  replace_all(text, "{DIR}", v.ascending ? "ASC" : "DESC");
  return text;
}

std::string render_question(const TemplateDef& t, const SlotValue& v, Language lang, int variant) {
  const std::size_t li = index_of(lang);
  const char* pattern = (t.slot == SlotKind::kTopKOrdered && v.ascending) ? t.surface_ascending[li]
                                                                          : t.surface[li];
  std::string body = fill(pattern, v);
  const std::string courtesy = kVariants[li][static_cast<std::size_t>(variant)];
  if (courtesy.empty()) return body;
  return lang == Language::kL3 ? body + " " + courtesy : courtesy + " " + body;
}

std::vector<SlotValue> slot_values(SlotKind kind, const ql::GraphStore& g) {
  std::vector<SlotValue> out;
  auto names = [&](const std::string& label, const std::string& key) {
    for (std::int64_t id : g.with_label(label)) {
      out.push_back({std::get<std::string>(g.find(id)->props.at(key)), 0, false});
    }
  };
  switch (kind) {
    case SlotKind::kCompany:
      names("Company", "name");
      break;
    case SlotKind::kPerson:
      names("Person", "name");
      break;
    case SlotKind::kArticle:
      names("Article", "title");
      break;
    case SlotKind::kCity: {
      std::set<std::string> cities;
      for (std::int64_t id : g.with_label("Company"))
        cities.insert(std::get<std::string>(g.find(id)->props.at("city")));
      for (const auto& c : cities) out.push_back({c, 0, false});
      break;
    }
    case SlotKind::kYear:
      for (std::int64_t y = 2010; y < 2025; ++y) out.push_back({"", y, false});
      break;
    case SlotKind::kTopK:
      for (std::int64_t k = 1; k <= 5; ++k) out.push_back({"", k, false});
      break;
    case SlotKind::kTopKOrdered:
      for (std::int64_t k = 1; k <= 5; ++k) {
        out.push_back({"", k, false});
        out.push_back({"", k, true});
      }
      break;
  }
  return out;
}

std::string sharing_name(Language a, Language b) {
  return "pair(" + to_string(a) + "," + to_string(b) + ")";
}

}  // namespace

std::size_t template_count() { return templates().size(); }

std::vector<TemplateQuery> template_queries(const ql::GraphStore& graph) {
  std::vector<TemplateQuery> out;
  for (const auto& t : templates()) {
    for (const auto& slot : slot_values(t.slot, graph)) {
      out.push_back({t.name, ql::print(ql::parse(fill(t.gold, slot)))});
    }
  }
  return out;
}

ParallelCorpus gen_corpus(const Schema& schema, const SplitSpec& spec, const ql::GraphStore& graph,
                          Rng& rng) {
  spec.validate();
  const auto& defs = templates();

  std::vector<Candidate> pool;
  for (std::size_t ti = 0; ti < defs.size(); ++ti) {
    for (const auto& slot : slot_values(defs[ti].slot, graph)) {
      const std::string gold = ql::print(ql::parse(fill(defs[ti].gold, slot)));
      const bool nonempty = !ql::execute(ql::parse(gold), graph).rows.empty();
      for (int variant = 0; variant < static_cast<int>(kVariants[0].size()); ++variant) {
        pool.push_back({ti, slot, variant, gold, nonempty});
      }
    }
  }
  rng.shuffle(pool);
  std::stable_partition(pool.begin(), pool.end(), [](const Candidate& c) { return c.nonempty; });

  const int needed = spec.distinct_questions();
  if (needed > static_cast<int>(pool.size())) {
    throw ConfigError("split needs " + std::to_string(needed) + " distinct questions but the " +
                      std::to_string(defs.size()) + " templates over this graph yield only " +
                      std::to_string(pool.size()));
  }
  pool.resize(static_cast<std::size_t>(needed));
  const auto nonempty = std::count_if(pool.begin(), pool.end(), [](const Candidate& c) { return c.nonempty; });
  if (needed > 0 && nonempty * 5 < static_cast<long>(needed) * 4) {
    throw ConfigError("only " + std::to_string(nonempty) + " of " + std::to_string(needed) +
                      " questions have non-empty answers on this graph (need 80%)");
  }

  ParallelCorpus corpus;
  corpus.spec = spec;
  std::int64_t qid = 0;
  std::size_t next = 0;
  auto emit = [&](const std::vector<Language>& langs, const std::string& split,
                  const std::string& sharing) {
    const Candidate& c = pool[next++];
    const TemplateDef& t = defs[c.tmpl];
    for (Language lang : langs) {
      Sample s;
      s.question_id = qid;
      s.language = lang;
      s.question = render_question(t, c.slot, lang, c.variant);
      s.gold = c.gold;
      s.prompt = make_prompt(schema, s.question);
      s.split = split;
      s.sharing = sharing;
      s.template_name = t.name;
      corpus.samples.push_back(std::move(s));
    }
    ++qid;
  };
  const std::vector<Language> all(kLanguages.begin(), kLanguages.end());
  for (int i = 0; i < spec.test; ++i) emit(all, "test", "shared-all");
  for (int i = 0; i < spec.shared_all; ++i) emit(all, "train", "shared-all");
  for (std::size_t a = 0; a < kLanguages.size(); ++a) {
    for (std::size_t b = a + 1; b < kLanguages.size(); ++b) {
      for (int i = 0; i < spec.pair; ++i) {
        emit({kLanguages[a], kLanguages[b]}, "train", sharing_name(kLanguages[a], kLanguages[b]));
      }
    }
  }
  for (Language lang : kLanguages) {
    for (int i = 0; i < spec.unique; ++i) emit({lang}, "train", "unique");
  }
  return corpus;
}

std::vector<Sample> ParallelCorpus::select(Language lang, std::string_view split) const {
  std::vector<Sample> out;
  for (const auto& s : samples)
    if (s.language == lang && s.split == split) out.push_back(s);
  return out;
}

std::vector<Sample> fusion_subset(const ParallelCorpus& corpus, int per_lang, Rng& rng) {
  require(per_lang >= 0, "fusion_subset: negative count");
  std::vector<std::int64_t> ids;
  for (const auto& s : corpus.samples) {
    if (s.split == "train" && s.sharing == "shared-all" && s.language == Language::kL1) {
      ids.push_back(s.question_id);
    }
  }
  if (static_cast<int>(ids.size()) < per_lang) {
    throw ConfigError("fusion subset needs " + std::to_string(per_lang) +
                      " shared questions per language, corpus has " + std::to_string(ids.size()));
  }
  rng.shuffle(ids);
  ids.resize(static_cast<std::size_t>(per_lang));
  const std::set<std::int64_t> chosen(ids.begin(), ids.end());
  std::vector<Sample> out;
  for (const auto& s : corpus.samples) {
    if (s.split == "train" && s.sharing == "shared-all" && chosen.count(s.question_id)) {
      out.push_back(s);
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const Sample& a, const Sample& b) {
    return a.question_id != b.question_id ? a.question_id < b.question_id
                                          : a.language < b.language;
  });
  return out;
}

std::string ParallelCorpus::to_jsonl() const {
  std::string out;
  for (const auto& s : samples) {
    nlohmann::ordered_json j;
    j["question_id"] = s.question_id;
    j["language"] = to_string(s.language);
    j["question"] = s.question;
    j["gold"] = s.gold;
    j["prompt"] = s.prompt;
    j["split"] = s.split;
    j["sharing"] = s.sharing;
    j["template"] = s.template_name;
    out += j.dump() + "\n";
  }
  return out;
}

ParallelCorpus ParallelCorpus::from_jsonl(std::string_view text, const SplitSpec& spec) {
  ParallelCorpus c;
  c.spec = spec;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Sample s;
      s.question_id = j.at("question_id").get<std::int64_t>();
      s.language = parse_language(j.at("language").get<std::string>());
      s.question = j.at("question").get<std::string>();
      s.gold = j.at("gold").get<std::string>();
      s.prompt = j.at("prompt").get<std::string>();
      s.split = j.at("split").get<std::string>();
      s.sharing = j.at("sharing").get<std::string>();
      s.template_name = j.value("template", "");
      c.samples.push_back(std::move(s));
    } catch (const std::exception& e) {
      throw FormatError("corpus line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return c;
}

}  // namespace t2c
