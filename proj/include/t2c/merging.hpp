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

// Weighted linear merging of adapters, applied to the raw factors:
//
//   A_merged = sum_i w_i * A_i,   B_merged = sum_i w_i * B_i
//
// The composed update B_merged * A_merged is not sum_i w_i * B_i * A_i; the
// cross terms are part of the method.

#ifndef T2C_MERGING_HPP_
#define T2C_MERGING_HPP_

#include <vector>

#include "t2c/lora.hpp"

namespace t2c {

struct MergeSpec {
  std::vector<double> weights;
  bool normalize = false;

  static MergeSpec uniform(std::size_t n);
};

// Throws ContractError on an empty list or weight-count mismatch and
// IncompatibleError (naming the target) when adapters differ in rank,
// alpha, targets or shapes.
LoraAdapter linear_merge(const std::vector<LoraAdapter>& adapters, const MergeSpec& spec);

}  // namespace t2c

#endif  // T2C_MERGING_HPP_
