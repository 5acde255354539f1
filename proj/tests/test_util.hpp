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

// Shared fixtures for the unit tests.

#ifndef T2C_TESTS_TEST_UTIL_HPP_
#define T2C_TESTS_TEST_UTIL_HPP_

#include <cmath>
#include <string>
#include <vector>

#include "t2c/lora.hpp"
#include "t2c/model.hpp"
#include "t2c/training.hpp"

namespace t2c::testing {

inline ModelConfig micro_config(int vocab = 16, int hidden = 8, int layers = 2) {
  ModelConfig c;
  c.vocab_size = vocab;
  c.hidden = hidden;
  c.layers = layers;
  c.heads = 2;
  c.ffn_dim = 2 * hidden;
  c.max_seq = 200;
  return c;
}

// Random weights with non-trivial norm parameters.
inline BaseWeights random_weights(const ModelConfig& cfg, std::uint64_t seed, double sd = 0.3) {
  Rng rng(seed);
  BaseWeights w = init_weights(cfg, rng);
  w.for_each([&](const std::string& name, Matrix& m) {
    const bool gain = name.size() >= 5 && name.compare(name.size() - 5, 5, ".gain") == 0;
    for (Index i = 0; i < m.size(); ++i) {
      m.data()[i] = static_cast<float>(gain ? 1.0 + 0.2 * rng.normal() : sd * rng.normal());
    }
  });
  return w;
}

inline LoraAdapter random_adapter(const ModelConfig& cfg, std::vector<std::string> targets, int rank,
                                  std::uint64_t seed, double sd = 0.3) {
  LoraSpec spec;
  spec.rank = rank;
  spec.alpha = 2.0 * rank;
  spec.target_modules = std::move(targets);
  spec.language_tag = "L1";
  Rng rng(seed);
  LoraAdapter a = init_adapter(spec, lora_target_shapes(cfg), rng);
  for (auto& p : a.pairs) {
    for (Index i = 0; i < p.a.size(); ++i) p.a.data()[i] = static_cast<float>(sd * rng.normal());
    for (Index i = 0; i < p.b.size(); ++i) p.b.data()[i] = static_cast<float>(sd * rng.normal());
  }
  return a;
}

inline Example random_example(Rng& rng, int vocab, std::size_t len, std::size_t target_start) {
  Example ex;
  ex.ids.push_back(1);
  for (std::size_t i = 1; i < len; ++i) ex.ids.push_back(4 + static_cast<int>(rng.below(static_cast<std::uint64_t>(vocab - 4))));
  ex.target_start = target_start;
  return ex;
}

inline double rel_err(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

}  // namespace t2c::testing

#endif  // T2C_TESTS_TEST_UTIL_HPP_
