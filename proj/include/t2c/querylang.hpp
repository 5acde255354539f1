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

// Mini graph-query language: a single MATCH pattern with at most one outgoing
// relationship hop, inline equality filters, projections, count aggregates,
// ORDER BY and LIMIT.
//
//   query   := MATCH node [ '-' '[' ':' TYPE ']' '->' node ]
//              RETURN item { ',' item } [ ORDER BY item [ ASC | DESC ] ] [ LIMIT int ]
//   node    := '(' var [ ':' Label ] [ '{' key ':' literal '}' ] ')'
//   item    := var '.' key | count '(' var ')'
//   literal := "string" | int
//
// Value order, used by ORDER BY and by canonical_result: integers (numeric)
// before strings (bytewise) before null.

#ifndef T2C_QUERYLANG_HPP_
#define T2C_QUERYLANG_HPP_

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

namespace t2c::ql {

// Null is only produced when a query reads a property a node does not have.
using Value = std::variant<std::monostate, std::int64_t, std::string>;

int compare_values(const Value& a, const Value& b);
std::string value_to_string(const Value& v);

struct NodePattern {
  std::string var;
  std::optional<std::string> label;
  std::optional<std::pair<std::string, Value>> filter;

  bool operator==(const NodePattern&) const = default;
};

struct HopPattern {
  std::string rel_type;
  NodePattern target;

  bool operator==(const HopPattern&) const = default;
};

struct ReturnItem {
  enum class Kind { kProperty, kCount };
  Kind kind = Kind::kProperty;
  std::string var;
  std::string key;  // empty for kCount

  bool operator==(const ReturnItem&) const = default;
  std::string column_name() const;
};

struct OrderBy {
  ReturnItem item;
  bool descending = false;

  bool operator==(const OrderBy&) const = default;
};

struct QueryAst {
  NodePattern source;
  std::optional<HopPattern> hop;
  std::vector<ReturnItem> items;
  std::optional<OrderBy> order;
  std::optional<std::int64_t> limit;

  bool operator==(const QueryAst&) const = default;
  bool aggregates() const;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t offset, std::vector<std::string> expected, const std::string& found);
  std::size_t offset() const { return offset_; }
  const std::vector<std::string>& expected() const { return expected_; }

 private:
  std::size_t offset_;
  std::vector<std::string> expected_;
};

class SemanticError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

QueryAst parse(std::string_view text);

// Canonical whitespace-separated rendering; parse(print(q)) == q.
std::string print(const QueryAst& query);

struct Node {
  std::int64_t id = 0;
  std::string label;
  std::map<std::string, Value> props;
};

struct Edge {
  std::int64_t src = 0;
  std::string type;
  std::int64_t dst = 0;

  auto operator<=>(const Edge&) const = default;
};

class GraphStore {
 public:
  // Throws std::invalid_argument on duplicate ids, dangling edges or null
  // property values.
  void add_node(Node node);
  void add_edge(Edge edge);

  // Nodes in ascending id order.
  const std::vector<Node>& nodes() const { return nodes_; }
  const std::set<Edge>& edges() const { return edges_; }
  const Node* find(std::int64_t id) const;

  // Ascending ids.
  const std::vector<std::int64_t>& with_label(const std::string& label) const;
  const std::vector<std::int64_t>& with_property(const std::string& label, const std::string& key,
                                                 const Value& value) const;
  const std::vector<std::int64_t>& out(std::int64_t src, const std::string& type) const;

  std::string to_jsonl() const;
  static GraphStore from_jsonl(std::string_view text);

 private:
  std::vector<Node> nodes_;
  std::unordered_map<std::int64_t, std::size_t> index_;
  std::set<Edge> edges_;
  std::map<std::string, std::vector<std::int64_t>> by_label_;
  std::map<std::string, std::vector<std::int64_t>> by_property_;
  std::map<std::pair<std::int64_t, std::string>, std::vector<std::int64_t>> out_;
};

struct ResultTable {
  std::vector<std::string> columns;
  std::vector<std::vector<Value>> rows;
};

// Bindings are enumerated in ascending (source id, target id) order. Without
// ORDER BY rows keep that order (aggregate groups: order of first binding);
// with ORDER BY rows are sorted by the key, ties broken by ascending full row.
// LIMIT applies last.
ResultTable execute(const QueryAst& query, const GraphStore& graph);

// Cells rendered as "i:<int>", "s:<string>" or "n:", joined by tabs; rows
// sorted bytewise and joined by newlines.
std::string canonical_result(const ResultTable& table);

}  // namespace t2c::ql

#endif  // T2C_QUERYLANG_HPP_
