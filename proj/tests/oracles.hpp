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

// Independent reference implementations shared by the unit and acceptance
// tests. They favour obviousness over speed.

#ifndef T2C_TESTS_ORACLES_HPP_
#define T2C_TESTS_ORACLES_HPP_

#include <algorithm>
#include <cctype>
#include <string>
#include <vector>

#include "t2c/querylang.hpp"

namespace t2c::testing {

// Nested-loop binder over every node pair; no indexes are consulted.
inline ql::ResultTable brute_execute(const ql::QueryAst& q, const ql::GraphStore& g) {
  auto matches = [](const ql::Node& n, const ql::NodePattern& p) {
    if (p.label && n.label != *p.label) return false;
    if (p.filter) {
      auto it = n.props.find(p.filter->first);
      if (it == n.props.end() || it->second != p.filter->second) return false;
    }
    return true;
  };
  auto prop = [](const ql::Node& n, const std::string& key) -> ql::Value {
    auto it = n.props.find(key);
    return it == n.props.end() ? ql::Value{} : it->second;
  };
  struct Bind {
    const ql::Node* src;
    const ql::Node* dst;
  };
  std::vector<Bind> binds;
  for (const auto& s : g.nodes()) {
    if (!matches(s, q.source)) continue;
    if (!q.hop) {
      binds.push_back({&s, nullptr});
      continue;
    }
    for (const auto& d : g.nodes()) {
      if (g.edges().count(ql::Edge{s.id, q.hop->rel_type, d.id}) && matches(d, q.hop->target)) {
        binds.push_back({&s, &d});
      }
    }
  }
  auto node_of = [&](const Bind& b, const std::string& var) {
    return var == q.source.var ? b.src : b.dst;
  };
  auto less_row = [](const std::vector<ql::Value>& a, const std::vector<ql::Value>& b) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      const int c = ql::compare_values(a[i], b[i]);
      if (c != 0) return c < 0;
    }
    return false;
  };

  ql::ResultTable t;
  for (const auto& it : q.items) t.columns.push_back(it.column_name());
  std::vector<std::pair<ql::Value, std::vector<ql::Value>>> rows;
  const bool agg = std::any_of(q.items.begin(), q.items.end(), [](const ql::ReturnItem& i) {
    return i.kind == ql::ReturnItem::Kind::kCount;
  });
  if (!agg) {
    for (const auto& b : binds) {
      std::vector<ql::Value> r;
      for (const auto& it : q.items) r.push_back(prop(*node_of(b, it.var), it.key));
      ql::Value key = q.order ? prop(*node_of(b, q.order->item.var), q.order->item.key) : ql::Value{};
      rows.push_back({key, r});
    }
  } else {
    std::vector<std::vector<ql::Value>> groups;
    std::vector<std::int64_t> counts;
    bool any_prop = false;
    for (const auto& it : q.items) any_prop |= it.kind == ql::ReturnItem::Kind::kProperty;
    if (!any_prop) {
      groups.emplace_back();
      counts.push_back(0);
    }
    for (const auto& b : binds) {
      std::vector<ql::Value> key;
      for (const auto& it : q.items)
        if (it.kind == ql::ReturnItem::Kind::kProperty) key.push_back(prop(*node_of(b, it.var), it.key));
      auto pos = std::find(groups.begin(), groups.end(), key) - groups.begin();
      if (pos == static_cast<long>(groups.size())) {
        groups.push_back(key);
        counts.push_back(0);
      }
      ++counts[static_cast<std::size_t>(pos)];
    }
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      std::vector<ql::Value> r;
      std::size_t k = 0;
      ql::Value key;
      for (const auto& it : q.items) {
        r.push_back(it.kind == ql::ReturnItem::Kind::kCount ? ql::Value{counts[gi]} : groups[gi][k++]);
        if (q.order && it == q.order->item) key = r.back();
      }
      rows.push_back({key, r});
    }
  }
  if (q.order) {
    const bool desc = q.order->descending;
    std::stable_sort(rows.begin(), rows.end(), [&](const auto& a, const auto& b) {
      const int c = ql::compare_values(a.first, b.first);
      if (c != 0) return desc ? c > 0 : c < 0;
      return less_row(a.second, b.second);
    });
  }
  for (const auto& r : rows) {
    if (q.limit && static_cast<std::int64_t>(t.rows.size()) >= *q.limit) break;
    t.rows.push_back(r.second);
  }
  return t;
}

// Classic O(m n) longest-common-subsequence table.
inline std::size_t lcs_table(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1, 0));
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j)
      d[i][j] = a[i - 1] == b[j - 1] ? d[i - 1][j - 1] + 1 : std::max(d[i - 1][j], d[i][j - 1]);
  return d[a.size()][b.size()];
}

// Word split with every punctuation character other than '_' on its own.
inline std::vector<std::string> oracle_tokens(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(cur);
    cur.clear();
  };
  for (char c : s) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isspace(u)) {
      flush();
    } else if (std::ispunct(u) && c != '_') {
      flush();
      out.emplace_back(1, c);
    } else {
      cur += c;
    }
  }
  flush();
  return out;
}

inline double oracle_rouge_l(const std::string& cand, const std::string& ref) {
  const auto c = oracle_tokens(cand), r = oracle_tokens(ref);
  if (c.empty() || r.empty()) return 0.0;
  // F1 of P = l / |c| and R = l / |r| reduces to 2 l / (|c| + |r|).
  const double l = static_cast<double>(lcs_table(c, r));
  return 2.0 * l / static_cast<double>(c.size() + r.size());
}

}  // namespace t2c::testing

#endif  // T2C_TESTS_ORACLES_HPP_
