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

// Low-rank adapters. A target matrix W0 (d x k, output x input) is decorated
// with A (r x k) and B (d x r); the effective update is (alpha / r) * B * A.
// The alpha / r factor is applied at forward time and never folded into the
// stored A and B, so merging operates on the raw factors.

#ifndef T2C_LORA_HPP_
#define T2C_LORA_HPP_

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "t2c/container.hpp"
#include "t2c/numerics.hpp"

namespace t2c {

struct LoraSpec {
  int rank = 8;
  double alpha = 16.0;
  double dropout = 0.0;
  std::vector<std::string> target_modules;
  std::string language_tag;

  double scale() const { return alpha / static_cast<double>(rank); }
  bool operator==(const LoraSpec&) const = default;
};

template <typename S>
struct LoraPair {
  std::string target;
  MatrixX<S> a;  // r x k
  MatrixX<S> b;  // d x r
};

template <typename S>
struct BasicLoraAdapter {
  LoraSpec spec;
  std::vector<LoraPair<S>> pairs;  // same order as spec.target_modules

  const LoraPair<S>* find(std::string_view target) const {
    for (const auto& p : pairs)
      if (p.target == target) return &p;
    return nullptr;
  }
  LoraPair<S>* find(std::string_view target) {
    for (auto& p : pairs)
      if (p.target == target) return &p;
    return nullptr;
  }

  template <typename T>
  BasicLoraAdapter<T> cast() const {
    BasicLoraAdapter<T> out;
    out.spec = spec;
    for (const auto& p : pairs) out.pairs.push_back({p.target, p.a.template cast<T>(), p.b.template cast<T>()});
    return out;
  }

  BasicLoraAdapter zeros_like() const {
    BasicLoraAdapter out = *this;
    for (auto& p : out.pairs) {
      p.a.setZero();
      p.b.setZero();
    }
    return out;
  }
};

using LoraAdapter = BasicLoraAdapter<float>;

// target name -> (d, k) of the base matrix it decorates.
using ShapeMap = std::map<std::string, std::pair<Index, Index>>;

// Checks rank, dropout and that every target exists in base_shapes with
// rank <= min(d, k) / 2. Throws ConfigError.
void validate_spec(const LoraSpec& spec, const ShapeMap& base_shapes);

// A ~ Normal(0, 0.02), B = 0: the initial delta is exactly zero.
LoraAdapter init_adapter(const LoraSpec& spec, const ShapeMap& base_shapes, Rng& rng);

// (alpha / r) * B * A as a dense d x k matrix.
Matrix materialize_delta(const LoraAdapter& adapter, std::string_view target);

TensorContainer adapter_to_container(const LoraAdapter& adapter);
LoraAdapter adapter_from_container(const TensorContainer& container);
std::string encode_adapter(const LoraAdapter& adapter);
void save_adapter(const LoraAdapter& adapter, const std::filesystem::path& path);
LoraAdapter load_adapter(const std::filesystem::path& path);

}  // namespace t2c

#endif  // T2C_LORA_HPP_
