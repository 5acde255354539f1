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

#include "t2c/merging.hpp"

#include <cmath>

namespace t2c {

MergeSpec MergeSpec::uniform(std::size_t n) {
  require(n > 0, "uniform merge over zero adapters");
  return {std::vector<double>(n, 1.0 / static_cast<double>(n)), false};
}

namespace {

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void check_compatible(const LoraAdapter& first, const LoraAdapter& other, std::size_t index) {
  const std::string who = "adapter " + std::to_string(index);
  if (other.spec.rank != first.spec.rank) {
    throw IncompatibleError(who + " has rank " + std::to_string(other.spec.rank) + ", expected " +
                            std::to_string(first.spec.rank));
  }
  if (other.spec.alpha != first.spec.alpha) throw IncompatibleError(who + " has a different alpha");
  if (other.pairs.size() != first.pairs.size()) {
    throw IncompatibleError(who + " targets a different set of modules");
  }
  for (std::size_t k = 0; k < first.pairs.size(); ++k) {
    const auto& p = first.pairs[k];
    const auto& q = other.pairs[k];
    if (q.target != p.target) {
      throw IncompatibleError(who + " has target '" + q.target + "' where '" + p.target + "' is expected");
    }
    if (q.a.rows() != p.a.rows() || q.a.cols() != p.a.cols() || q.b.rows() != p.b.rows() ||
        q.b.cols() != p.b.cols()) {
      throw IncompatibleError("target '" + p.target + "': " + who + " has factors " + shape(q.a) + " / " +
                              shape(q.b) + ", expected " + shape(p.a) + " / " + shape(p.b));
    }
  }
}

void weighted_sum(const std::vector<const Matrix*>& ms, const std::vector<double>& w, Matrix& out) {
  out.resize(ms[0]->rows(), ms[0]->cols());
  for (Index i = 0; i < out.size(); ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < ms.size(); ++k) acc += w[k] * static_cast<double>(ms[k]->data()[i]);
    out.data()[i] = static_cast<float>(acc);
  }
}

}  // namespace

LoraAdapter linear_merge(const std::vector<LoraAdapter>& adapters, const MergeSpec& spec) {
  require(!adapters.empty(), "linear_merge: no adapters");
  require(spec.weights.size() == adapters.size(),
          "linear_merge: " + std::to_string(spec.weights.size()) + " weights for " +
              std::to_string(adapters.size()) + " adapters");
  std::vector<double> w = spec.weights;
  for (double x : w) require(std::isfinite(x), "linear_merge: non-finite weight");
  if (spec.normalize) {
    double total = 0.0;
    for (double x : w) total += x;
    require(total != 0.0, "linear_merge: weights sum to zero");
    for (double& x : w) x /= total;
  }
  for (std::size_t i = 1; i < adapters.size(); ++i) check_compatible(adapters[0], adapters[i], i);

  LoraAdapter out;
  out.spec = adapters[0].spec;
  out.spec.language_tag = "merged";
  for (std::size_t k = 0; k < adapters[0].pairs.size(); ++k) {
    std::vector<const Matrix*> as, bs;
    for (const auto& a : adapters) {
      as.push_back(&a.pairs[k].a);
      bs.push_back(&a.pairs[k].b);
    }
    LoraPair<float> p;
    p.target = adapters[0].pairs[k].target;
    weighted_sum(as, w, p.a);
    weighted_sum(bs, w, p.b);
    out.pairs.push_back(std::move(p));
  }
  return out;
}

}  // namespace t2c
