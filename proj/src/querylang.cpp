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

#include "t2c/querylang.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <sstream>

#include "json.hpp"

namespace t2c::ql {

int compare_values(const Value& a, const Value& b) {
  // Rank: int 0, string 1, null 2.
  auto rank = [](const Value& v) {
    if (std::holds_alternative<std::int64_t>(v)) return 0;
    if (std::holds_alternative<std::string>(v)) return 1;
    return 2;
  };
  const int ra = rank(a), rb = rank(b);
  if (ra != rb) return ra < rb ? -1 : 1;
  if (ra == 0) {
    const auto x = std::get<std::int64_t>(a), y = std::get<std::int64_t>(b);
    return x < y ? -1 : (x > y ? 1 : 0);
  }
  if (ra == 1) {
    const int c = std::get<std::string>(a).compare(std::get<std::string>(b));
    return c < 0 ? -1 : (c > 0 ? 1 : 0);
  }
  return 0;
}

std::string value_to_string(const Value& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
  if (const auto* s = std::get_if<std::string>(&v)) return *s;
  return "null";
}

std::string ReturnItem::column_name() const {
  return kind == Kind::kCount ? "count(" + var + ")" : var + "." + key;
}

bool QueryAst::aggregates() const {
  return std::any_of(items.begin(), items.end(),
                     [](const ReturnItem& i) { return i.kind == ReturnItem::Kind::kCount; });
}

namespace {

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

}  // namespace

ParseError::ParseError(std::size_t offset, std::vector<std::string> expected,
                       const std::string& found)
    : std::runtime_error("syntax error at offset " + std::to_string(offset) + ": expected " +
                         join(expected, " | ") + ", found " + found),
      offset_(offset),
      expected_(std::move(expected)) {}

// ---------------------------------------------------------------------------
// Lexer

namespace {

enum class Tok { kIdent, kKeyword, kInt, kString, kPunct, kEnd };

struct Token {
  Tok kind;
  std::string text;  // identifier/keyword/punct spelling, decoded string contents
  std::int64_t number = 0;
  std::size_t offset = 0;
};

const std::set<std::string, std::less<>> kKeywords = {"MATCH", "RETURN", "ORDER", "BY",
                                                      "LIMIT", "ASC",    "DESC",  "count"};

std::string describe(const Token& t) {
  switch (t.kind) {
    case Tok::kEnd:
      return "end of input";
    case Tok::kString:
      return "string \"" + t.text + "\"";
    case Tok::kInt:
      return "integer " + std::to_string(t.number);
    default:
      return "'" + t.text + "'";
  }
}

std::vector<Token> lex(std::string_view s) {
  std::vector<Token> out;
  std::size_t i = 0;
  auto is_ident_start = [](char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; };
  auto is_ident = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
  while (i < s.size()) {
    const char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    const std::size_t start = i;
    if (is_ident_start(c)) {
      while (i < s.size() && is_ident(s[i])) ++i;
      std::string word(s.substr(start, i - start));
      const Tok kind = kKeywords.count(word) ? Tok::kKeyword : Tok::kIdent;
      out.push_back({kind, std::move(word), 0, start});
      continue;
    }
    const bool negative = c == '-' && i + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[i + 1]));
    if (std::isdigit(static_cast<unsigned char>(c)) || negative) {
      ++i;
      while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
      std::int64_t v = 0;
      const auto text = s.substr(start, i - start);
      const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw ParseError(start, {"integer literal in range"}, "'" + std::string(text) + "'");
      }
      out.push_back({Tok::kInt, std::string(text), v, start});
      continue;
    }
    if (c == '"') {
      ++i;
      std::string value;
      bool closed = false;
      while (i < s.size()) {
        if (s[i] == '\\' && i + 1 < s.size()) {
          value.push_back(s[i + 1]);
          i += 2;
          continue;
        }
        if (s[i] == '"') {
          closed = true;
          ++i;
          break;
        }
        value.push_back(s[i++]);
      }
      if (!closed) throw ParseError(s.size(), {"'\"'"}, "end of input");
      out.push_back({Tok::kString, std::move(value), 0, start});
      continue;
    }
    if (c == '-' && i + 1 < s.size() && s[i + 1] == '>') {
      out.push_back({Tok::kPunct, "->", 0, start});
      i += 2;
      continue;
    }
    if (std::string_view("()[]{}:,.-").find(c) != std::string_view::npos) {
      out.push_back({Tok::kPunct, std::string(1, c), 0, start});
      ++i;
      continue;
    }
    throw ParseError(start, {"token"}, "'" + std::string(1, c) + "'");
  }
  out.push_back({Tok::kEnd, "", 0, s.size()});
  return out;
}

// ---------------------------------------------------------------------------
// Parser

class Parser {
 public:
  explicit Parser(std::string_view text) : toks_(lex(text)) {}

  QueryAst query() {
    QueryAst q;
    keyword("MATCH");
    q.source = node();
    if (peek_punct("-")) {
      ++pos_;
      punct("[");
      punct(":");
      HopPattern hop;
      hop.rel_type = ident("relationship type");
      punct("]");
      punct("->");
      hop.target = node();
      q.hop = std::move(hop);
    }
    keyword("RETURN");
    q.items.push_back(item());
    while (peek_punct(",")) {
      ++pos_;
      q.items.push_back(item());
    }
    if (peek_keyword("ORDER")) {
      ++pos_;
      keyword("BY");
      OrderBy ob;
      ob.item = item();
      if (peek_keyword("ASC")) {
        ++pos_;
      } else if (peek_keyword("DESC")) {
        ++pos_;
        ob.descending = true;
      }
      q.order = std::move(ob);
    }
    if (peek_keyword("LIMIT")) {
      ++pos_;
      const Token& t = cur();
      if (t.kind != Tok::kInt || t.number < 0) fail({"non-negative integer"});
      q.limit = t.number;
      ++pos_;
    }
    if (cur().kind != Tok::kEnd) {
      std::vector<std::string> expected;
      if (!q.order && !q.limit) expected = {"','", "ORDER", "LIMIT", "end of input"};
      else if (!q.limit) expected = {"LIMIT", "end of input"};
      else expected = {"end of input"};
      fail(expected);
    }
    return q;
  }

 private:
  const Token& cur() const { return toks_[pos_]; }

  [[noreturn]] void fail(std::vector<std::string> expected) const {
    throw ParseError(cur().offset, std::move(expected), describe(cur()));
  }

  bool peek_punct(std::string_view p) const { return cur().kind == Tok::kPunct && cur().text == p; }
  bool peek_keyword(std::string_view k) const {
    return cur().kind == Tok::kKeyword && cur().text == k;
  }

  void punct(std::string_view p) {
    if (!peek_punct(p)) fail({"'" + std::string(p) + "'"});
    ++pos_;
  }

  void keyword(std::string_view k) {
    if (!peek_keyword(k)) fail({std::string(k)});
    ++pos_;
  }

  std::string ident(const std::string& what) {
    if (cur().kind != Tok::kIdent) fail({what});
    return toks_[pos_++].text;
  }

  NodePattern node() {
    NodePattern n;
    punct("(");
    n.var = ident("variable");
    if (peek_punct(":")) {
      ++pos_;
      n.label = ident("label");
    }
    if (peek_punct("{")) {
      ++pos_;
      std::string key = ident("property key");
      punct(":");
      Value v;
      if (cur().kind == Tok::kString) {
        v = cur().text;
      } else if (cur().kind == Tok::kInt) {
        v = cur().number;
      } else {
        fail({"string literal", "integer literal"});
      }
      ++pos_;
      punct("}");
      n.filter = std::make_pair(std::move(key), std::move(v));
    }
    if (!peek_punct(")")) {
      fail(n.label ? (n.filter ? std::vector<std::string>{"')'"}
                               : std::vector<std::string>{"'{'", "')'"})
                   : std::vector<std::string>{"':'", "'{'", "')'"});
    }
    ++pos_;
    return n;
  }

  ReturnItem item() {
    ReturnItem it;
    if (peek_keyword("count")) {
      ++pos_;
      punct("(");
      it.kind = ReturnItem::Kind::kCount;
      it.var = ident("variable");
      punct(")");
      return it;
    }
    if (cur().kind != Tok::kIdent) fail({"variable", "count"});
    it.var = toks_[pos_++].text;
    punct(".");
    it.key = ident("property key");
    return it;
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

void check_semantics(const QueryAst& q) {
  std::set<std::string> bound = {q.source.var};
  if (q.hop) {
    if (q.hop->target.var == q.source.var) {
      throw SemanticError("variable " + q.source.var + " bound twice");
    }
    bound.insert(q.hop->target.var);
  }
  for (const auto& it : q.items) {
    if (!bound.count(it.var)) throw SemanticError("unbound variable " + it.var);
  }
  if (q.order) {
    if (!bound.count(q.order->item.var)) {
      throw SemanticError("unbound variable " + q.order->item.var);
    }
    const bool returned =
        std::find(q.items.begin(), q.items.end(), q.order->item) != q.items.end();
    if ((q.aggregates() || q.order->item.kind == ReturnItem::Kind::kCount) && !returned) {
      throw SemanticError("ORDER BY " + q.order->item.column_name() +
                          " must be a returned item when aggregating");
    }
  }
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out + "\"";
}

std::string print_node(const NodePattern& n) {
  std::string out = "( " + n.var;
  if (n.label) out += " : " + *n.label;
  if (n.filter) {
    out += " { " + n.filter->first + " : ";
    const Value& v = n.filter->second;
    if (const auto* s = std::get_if<std::string>(&v)) out += quote(*s);
    else out += value_to_string(v);
    out += " }";
  }
  return out + " )";
}

std::string print_item(const ReturnItem& it) {
  return it.kind == ReturnItem::Kind::kCount ? "count ( " + it.var + " )"
                                             : it.var + " . " + it.key;
}

}  // namespace

QueryAst parse(std::string_view text) {
  Parser p(text);
  QueryAst q = p.query();
  check_semantics(q);
  return q;
}

std::string print(const QueryAst& q) {
  std::string out = "MATCH " + print_node(q.source);
  if (q.hop) out += " - [ : " + q.hop->rel_type + " ] -> " + print_node(q.hop->target);
  out += " RETURN ";
  for (std::size_t i = 0; i < q.items.size(); ++i) {
    if (i) out += " , ";
    out += print_item(q.items[i]);
  }
  if (q.order) out += " ORDER BY " + print_item(q.order->item) + (q.order->descending ? " DESC" : " ASC");
  if (q.limit) out += " LIMIT " + std::to_string(*q.limit);
  return out;
}

// ---------------------------------------------------------------------------
// Graph store

namespace {

const std::vector<std::int64_t> kNoIds;

std::string property_key(const std::string& label, const std::string& key, const Value& v) {
  const char tag = std::holds_alternative<std::int64_t>(v) ? 'i' : 's';
  return label + '\x1f' + key + '\x1f' + tag + value_to_string(v);
}

void insert_sorted(std::vector<std::int64_t>& ids, std::int64_t id) {
  ids.insert(std::upper_bound(ids.begin(), ids.end(), id), id);
}

}  // namespace

void GraphStore::add_node(Node node) {
  if (index_.count(node.id)) {
    throw std::invalid_argument("duplicate node id " + std::to_string(node.id));
  }
  for (const auto& [k, v] : node.props) {
    if (std::holds_alternative<std::monostate>(v)) {
      throw std::invalid_argument("node " + std::to_string(node.id) + ": null property " + k);
    }
  }
  insert_sorted(by_label_[node.label], node.id);
  for (const auto& [k, v] : node.props) insert_sorted(by_property_[property_key(node.label, k, v)], node.id);
  auto pos = std::upper_bound(nodes_.begin(), nodes_.end(), node.id,
                              [](std::int64_t id, const Node& n) { return id < n.id; });
  nodes_.insert(pos, std::move(node));
  index_.clear();
  for (std::size_t i = 0; i < nodes_.size(); ++i) index_[nodes_[i].id] = i;
}

void GraphStore::add_edge(Edge edge) {
  if (!find(edge.src) || !find(edge.dst)) {
    throw std::invalid_argument("edge " + std::to_string(edge.src) + "-[" + edge.type + "]->" +
                                std::to_string(edge.dst) + " has a missing endpoint");
  }
  if (edges_.insert(edge).second) insert_sorted(out_[{edge.src, edge.type}], edge.dst);
}

const Node* GraphStore::find(std::int64_t id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &nodes_[it->second];
}

const std::vector<std::int64_t>& GraphStore::with_label(const std::string& label) const {
  auto it = by_label_.find(label);
  return it == by_label_.end() ? kNoIds : it->second;
}

const std::vector<std::int64_t>& GraphStore::with_property(const std::string& label,
                                                           const std::string& key,
                                                           const Value& value) const {
  if (std::holds_alternative<std::monostate>(value)) return kNoIds;
  auto it = by_property_.find(property_key(label, key, value));
  return it == by_property_.end() ? kNoIds : it->second;
}

const std::vector<std::int64_t>& GraphStore::out(std::int64_t src, const std::string& type) const {
  auto it = out_.find({src, type});
  return it == out_.end() ? kNoIds : it->second;
}

std::string GraphStore::to_jsonl() const {
  std::string out;
  for (const auto& n : nodes_) {
    nlohmann::ordered_json j;
    j["kind"] = "node";
    j["id"] = n.id;
    j["label"] = n.label;
    nlohmann::ordered_json props = nlohmann::ordered_json::object();
    for (const auto& [k, v] : n.props) {
      if (const auto* i = std::get_if<std::int64_t>(&v)) props[k] = *i;
      else props[k] = std::get<std::string>(v);
    }
    j["props"] = props;
    out += j.dump() + "\n";
  }
  for (const auto& e : edges_) {
    nlohmann::ordered_json j;
    j["kind"] = "edge";
    j["src"] = e.src;
    j["type"] = e.type;
    j["dst"] = e.dst;
    out += j.dump() + "\n";
  }
  return out;
}

GraphStore GraphStore::from_jsonl(std::string_view text) {
  GraphStore g;
  std::vector<Edge> edges;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const std::string kind = j.at("kind").get<std::string>();
      if (kind == "node") {
        Node n;
        n.id = j.at("id").get<std::int64_t>();
        n.label = j.at("label").get<std::string>();
        for (const auto& [k, v] : j.at("props").items()) {
          if (v.is_number_integer()) n.props[k] = v.get<std::int64_t>();
          else if (v.is_string()) n.props[k] = v.get<std::string>();
          else throw std::invalid_argument("property " + k + " must be a string or integer");
        }
        g.add_node(std::move(n));
      } else if (kind == "edge") {
        edges.push_back({j.at("src").get<std::int64_t>(), j.at("type").get<std::string>(),
                         j.at("dst").get<std::int64_t>()});
      } else {
        throw std::invalid_argument("unknown kind '" + kind + "'");
      }
    } catch (const std::exception& e) {
      throw std::invalid_argument("graph line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  for (auto& e : edges) g.add_edge(std::move(e));
  return g;
}

// ---------------------------------------------------------------------------
// Execution

namespace {

struct Binding {
  std::int64_t src;
  std::int64_t dst;  // -1 without a hop
};

bool matches(const Node& n, const NodePattern& p) {
  if (p.label && n.label != *p.label) return false;
  if (p.filter) {
    auto it = n.props.find(p.filter->first);
    if (it == n.props.end() || compare_values(it->second, p.filter->second) != 0) return false;
  }
  return true;
}

std::vector<std::int64_t> candidates(const NodePattern& p, const GraphStore& g) {
  if (p.label && p.filter) return g.with_property(*p.label, p.filter->first, p.filter->second);
  if (p.label) return g.with_label(*p.label);
  std::vector<std::int64_t> ids;
  for (const auto& n : g.nodes())
    if (matches(n, p)) ids.push_back(n.id);
  return ids;
}

Value property(const GraphStore& g, std::int64_t id, const std::string& key) {
  const Node* n = g.find(id);
  auto it = n->props.find(key);
  return it == n->props.end() ? Value{} : it->second;
}

int compare_rows(const std::vector<Value>& a, const std::vector<Value>& b) {
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
    const int c = compare_values(a[i], b[i]);
    if (c != 0) return c;
  }
  return a.size() < b.size() ? -1 : (a.size() > b.size() ? 1 : 0);
}

}  // namespace

ResultTable execute(const QueryAst& q, const GraphStore& g) {
  std::vector<Binding> bindings;
  for (std::int64_t s : candidates(q.source, g)) {
    if (!q.hop) {
      bindings.push_back({s, -1});
      continue;
    }
    for (std::int64_t d : g.out(s, q.hop->rel_type)) {
      if (matches(*g.find(d), q.hop->target)) bindings.push_back({s, d});
    }
  }
  auto id_of = [&](const Binding& b, const std::string& var) {
    return var == q.source.var ? b.src : b.dst;
  };

  ResultTable table;
  for (const auto& it : q.items) table.columns.push_back(it.column_name());

  struct Row {
    std::vector<Value> cells;
    Value key;
  };
  std::vector<Row> rows;

  if (!q.aggregates()) {
    for (const auto& b : bindings) {
      Row r;
      for (const auto& it : q.items) r.cells.push_back(property(g, id_of(b, it.var), it.key));
      if (q.order) r.key = property(g, id_of(b, q.order->item.var), q.order->item.key);
      rows.push_back(std::move(r));
    }
  } else {
    // Implicit grouping on the non-aggregate items.
    std::vector<std::vector<Value>> keys;
    std::vector<std::int64_t> counts;
    const bool grouped = std::any_of(q.items.begin(), q.items.end(), [](const ReturnItem& i) {
      return i.kind == ReturnItem::Kind::kProperty;
    });
    if (!grouped) {
      keys.emplace_back();
      counts.push_back(0);
    }
    for (const auto& b : bindings) {
      std::vector<Value> key;
      for (const auto& it : q.items)
        if (it.kind == ReturnItem::Kind::kProperty) key.push_back(property(g, id_of(b, it.var), it.key));
      std::size_t gi = 0;
      while (gi < keys.size() && compare_rows(keys[gi], key) != 0) ++gi;
      if (gi == keys.size()) {
        keys.push_back(std::move(key));
        counts.push_back(0);
      }
      ++counts[gi];
    }
    for (std::size_t gi = 0; gi < keys.size(); ++gi) {
      Row r;
      std::size_t k = 0;
      for (const auto& it : q.items) {
        if (it.kind == ReturnItem::Kind::kCount) r.cells.emplace_back(counts[gi]);
        else r.cells.push_back(keys[gi][k++]);
      }
      if (q.order) {
        const auto pos = std::find(q.items.begin(), q.items.end(), q.order->item) - q.items.begin();
        r.key = r.cells[static_cast<std::size_t>(pos)];
      }
      rows.push_back(std::move(r));
    }
  }

  if (q.order) {
    const bool desc = q.order->descending;
    std::stable_sort(rows.begin(), rows.end(), [desc](const Row& a, const Row& b) {
      const int c = compare_values(a.key, b.key);
      if (c != 0) return desc ? c > 0 : c < 0;
      return compare_rows(a.cells, b.cells) < 0;
    });
  }
  if (q.limit && rows.size() > static_cast<std::size_t>(*q.limit)) {
    rows.resize(static_cast<std::size_t>(*q.limit));
  }
  for (auto& r : rows) table.rows.push_back(std::move(r.cells));
  return table;
}

std::string canonical_result(const ResultTable& table) {
  std::vector<std::string> lines;
  lines.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    std::string line;
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) line += '\t';
      const Value& v = row[i];
      if (const auto* n = std::get_if<std::int64_t>(&v)) line += "i:" + std::to_string(*n);
      else if (const auto* s = std::get_if<std::string>(&v)) line += "s:" + *s;
      else line += "n:";
    }
    lines.push_back(std::move(line));
  }
  std::sort(lines.begin(), lines.end());
  return join(lines, "\n");
}

}  // namespace t2c::ql
