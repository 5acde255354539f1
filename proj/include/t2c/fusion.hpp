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

// Learned fusion of per-language adapters.
//
// For a prompt x the gate sees
//
//   [ mean_t h_base(x)_t ,  f_1, ..., f_n ],   f_i = mean of logits_i over the
//                                              last min(200, T) prompt rows
//
// and, after per-feature standardization with statistics fixed from the gate's
// training set, a one-hidden-layer ReLU network maps it to
// w(x) = softmax(MLP(.)). The
// fused model emits sum_i w_i(x) * logits_i, with w computed once from the
// prompt and held for every generated token.

#ifndef T2C_FUSION_HPP_
#define T2C_FUSION_HPP_

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "t2c/corpus.hpp"
#include "t2c/lora.hpp"
#include "t2c/model.hpp"
#include "t2c/training.hpp"

namespace t2c {

inline constexpr int kPreviewWindow = 200;
inline constexpr int kGateHidden = 128;

template <typename S>
struct BasicGateFeatures {
  VectorX<S> base_pooled;             // H
  std::vector<VectorX<S>> previews;   // n x V
  VectorX<S> concat() const;          // H + n * V
};
using GateFeatures = BasicGateFeatures<float>;

template <typename S>
struct BasicGateNetwork {
  int n = 0;
  int hidden_size = 0;  // H of the base model
  int vocab_size = 0;
  int width = kGateHidden;
  std::vector<std::string> adapter_order;  // language tags
  // Input standardization x' = (x - in_shift) * in_scale; not trained.
  MatrixX<S> in_shift;  // 1 x (H + n V)
  MatrixX<S> in_scale;  // 1 x (H + n V)
  MatrixX<S> w1;  // (H + n V) x width
  MatrixX<S> b1;  // 1 x width
  MatrixX<S> w2;  // width x n
  MatrixX<S> b2;  // 1 x n

  int input_dim() const { return hidden_size + n * vocab_size; }

  template <typename F>
  void for_each(F&& f) {
    f(std::string("w1"), w1);
    f(std::string("b1"), b1);
    f(std::string("w2"), w2);
    f(std::string("b2"), b2);
  }
  template <typename F>
  void for_each(F&& f) const {
    f(std::string("w1"), w1);
    f(std::string("b1"), b1);
    f(std::string("w2"), w2);
    f(std::string("b2"), b2);
  }

  BasicGateNetwork zeros_like() const {
    BasicGateNetwork out = *this;
    out.for_each([](const std::string&, MatrixX<S>& m) { m.setZero(); });
    return out;
  }
  template <typename T>
  BasicGateNetwork<T> cast() const {
    BasicGateNetwork<T> out;
    out.n = n;
    out.hidden_size = hidden_size;
    out.vocab_size = vocab_size;
    out.width = width;
    out.adapter_order = adapter_order;
    out.in_shift = in_shift.template cast<T>();
    out.in_scale = in_scale.template cast<T>();
    out.w1 = w1.template cast<T>();
    out.b1 = b1.template cast<T>();
    out.w2 = w2.template cast<T>();
    out.b2 = b2.template cast<T>();
    return out;
  }
};
using GateNetwork = BasicGateNetwork<float>;

// First layer ~ Normal(0, 1 / sqrt(input_dim)), everything else zero, so the
// untrained gate is uniform. Standardization starts as the identity.
GateNetwork init_gate(int n, int hidden_size, int vocab_size, std::vector<std::string> adapter_order,
                      Rng& rng, int width = kGateHidden);

// w(x); throws ContractError on a dimension mismatch.
template <typename S>
VectorX<S> gate(const BasicGateNetwork<S>& net, const BasicGateFeatures<S>& feats);

// Base final-hidden mean over non-pad prompt rows and per-adapter previews.
GateFeatures preview_features(const BaseWeights& base, const std::vector<LoraAdapter>& adapters,
                              std::span<const int> prompt_ids);
// Same pooling from already computed matrices (rows = prompt positions).
GateFeatures pool_features(const Matrix& base_hidden, std::span<const int> prompt_ids,
                           const std::vector<const Matrix*>& adapter_logits);

struct FusedModel {
  const BaseWeights* base = nullptr;
  std::vector<LoraAdapter> adapters;
  GateNetwork gate;
};

// Weights for a prompt.
Vector gate_weights(const FusedModel& model, std::span<const int> prompt_ids);

// sum_i w_i * logits_i, accumulated in double in adapter order.
Matrix fuse_logits(const std::vector<const Matrix*>& logits, const Vector& w);

// Fused logits of ids, with w computed from the first prompt_len ids
// (all of them when prompt_len is 0).
Matrix fused_forward(const FusedModel& model, std::span<const int> ids, std::size_t prompt_len = 0);

std::vector<int> fused_decode(const FusedModel& model, std::span<const int> prompt_ids, int max_new);
// Fused decode that also reports the gate weights it used.
std::vector<int> fused_decode(const FusedModel& model, std::span<const int> prompt_ids, int max_new,
                              Vector* weights_out);

// One training instance for the gate: features of the prompt and each
// adapter's logits at the rows that predict the targets.
template <typename S>
struct GateExample {
  VectorX<S> features;
  std::vector<MatrixX<S>> logits;  // n x (targets x V)
  std::vector<int> targets;
};

GateExample<float> make_gate_example(const BaseWeights& base, const std::vector<LoraAdapter>& adapters,
                                     const Example& ex);

// Token-mean cross-entropy of the fused logits; gradients over gate
// parameters only.
template <typename S>
double gate_loss_and_grads(const BasicGateNetwork<S>& net, std::span<const GateExample<S>> batch,
                           BasicGateNetwork<S>* grads);

struct GateTrainResult {
  GateNetwork gate;
  TrainReport report;
};

// Fixes the standardization from subset, then trains only the gate on it
// (subset is drawn from questions shared by every language). Throws ContractError on an empty subset and TrainingError if
// the base or an adapter changes during training.
GateTrainResult train_gate(const FusedModel& model, const std::vector<Sample>& subset, const Vocab& vocab,
                           const TrainConfig& cfg, Rng& rng);

// Index of the largest gate weight for the prompt.
int route(const FusedModel& model, std::span<const int> prompt_ids);

std::string encode_gate(const GateNetwork& net);
void save_gate(const GateNetwork& net, const std::filesystem::path& path);
GateNetwork decode_gate(const TensorContainer& container);
GateNetwork load_gate(const std::filesystem::path& path);

}  // namespace t2c

#endif  // T2C_FUSION_HPP_
