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

// Small decoder-only transformer standing in for the frozen base model.
//
// Pre-norm residual blocks with learned positional embeddings and no weight
// tying:
//
//   x   = tok_emb[id] + pos_emb[t]
//   x  += Attn(LN1(x))          causal, multi-head, projections q k v o
//   x  += Down(GELU(Up(LN2(x))))
//   h   = LNf(x);  logits = h * head
//
// Linear weights are stored input x output (y = x * W), so the stored matrix
// is the transpose of the d x k matrix a low-rank adapter decorates. When an
// adapter is present every targeted projection computes
// y = x * W + (alpha / r) * (x * A^T) * B^T.
//
// All row-wise work (norms, projections, attention of a query row) depends only
// on that row and earlier keys, so DecodeSession::extend reproduces forward()
// bit for bit.

#ifndef T2C_MODEL_HPP_
#define T2C_MODEL_HPP_

#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "t2c/container.hpp"
#include "t2c/lora.hpp"
#include "t2c/numerics.hpp"
#include "t2c/vocab.hpp"

namespace t2c {

struct ModelConfig {
  int vocab_size = 0;
  int hidden = 64;
  int layers = 2;
  int heads = 4;
  int ffn_dim = 256;
  int max_seq = 256;

  // Throws ConfigError.
  void validate() const;
  int head_dim() const { return hidden / heads; }
  bool operator==(const ModelConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

inline constexpr double kNormEps = 1e-5;

template <typename S>
struct LayerParams {
  MatrixX<S> ln1_gain, ln1_bias;  // 1 x H
  MatrixX<S> wq, wk, wv, wo;      // H x H
  MatrixX<S> ln2_gain, ln2_bias;  // 1 x H
  MatrixX<S> w_up;                // H x F
  MatrixX<S> b_up;                // 1 x F
  MatrixX<S> w_down;              // F x H
  MatrixX<S> b_down;              // 1 x H
};

template <typename S>
struct BasicWeights {
  ModelConfig config;
  MatrixX<S> tok_emb;  // V x H
  MatrixX<S> pos_emb;  // T_max x H
  std::vector<LayerParams<S>> layers;
  MatrixX<S> final_gain, final_bias;  // 1 x H
  MatrixX<S> head;                    // H x V

  // Visits every parameter as (name, matrix) in serialization order.
  template <typename Self, typename F>
  static void visit(Self& self, F&& f) {
    f(std::string("tok_emb"), self.tok_emb);
    f(std::string("pos_emb"), self.pos_emb);
    for (std::size_t l = 0; l < self.layers.size(); ++l) {
      auto& L = self.layers[l];
      const std::string p = "layers." + std::to_string(l) + ".";
      f(p + "ln1.gain", L.ln1_gain);
      f(p + "ln1.bias", L.ln1_bias);
      f(p + "attn.q", L.wq);
      f(p + "attn.k", L.wk);
      f(p + "attn.v", L.wv);
      f(p + "attn.o", L.wo);
      f(p + "ln2.gain", L.ln2_gain);
      f(p + "ln2.bias", L.ln2_bias);
      f(p + "ffn.up", L.w_up);
      f(p + "ffn.up_bias", L.b_up);
      f(p + "ffn.down", L.w_down);
      f(p + "ffn.down_bias", L.b_down);
    }
    f(std::string("final_ln.gain"), self.final_gain);
    f(std::string("final_ln.bias"), self.final_bias);
    f(std::string("head"), self.head);
  }
  template <typename F>
  void for_each(F&& f) {
    visit(*this, std::forward<F>(f));
  }
  template <typename F>
  void for_each(F&& f) const {
    visit(*this, std::forward<F>(f));
  }

  template <typename T>
  BasicWeights<T> cast() const {
    BasicWeights<T> out;
    out.config = config;
    out.tok_emb = tok_emb.template cast<T>();
    out.pos_emb = pos_emb.template cast<T>();
    for (const auto& L : layers) {
      LayerParams<T> c;
      c.ln1_gain = L.ln1_gain.template cast<T>();
      c.ln1_bias = L.ln1_bias.template cast<T>();
      c.wq = L.wq.template cast<T>();
      c.wk = L.wk.template cast<T>();
      c.wv = L.wv.template cast<T>();
      c.wo = L.wo.template cast<T>();
      c.ln2_gain = L.ln2_gain.template cast<T>();
      c.ln2_bias = L.ln2_bias.template cast<T>();
      c.w_up = L.w_up.template cast<T>();
      c.b_up = L.b_up.template cast<T>();
      c.w_down = L.w_down.template cast<T>();
      c.b_down = L.b_down.template cast<T>();
      out.layers.push_back(std::move(c));
    }
    out.final_gain = final_gain.template cast<T>();
    out.final_bias = final_bias.template cast<T>();
    out.head = head.template cast<T>();
    return out;
  }

  BasicWeights zeros_like() const {
    BasicWeights out = *this;
    out.for_each([](const std::string&, MatrixX<S>& m) { m.setZero(); });
    return out;
  }
};

using BaseWeights = BasicWeights<float>;

// Adapter-targetable matrices: layers.{l}.attn.{q,k,v,o} and
// layers.{l}.ffn.{up,down}, with their (d, k) = (output, input) shapes.
ShapeMap lora_target_shapes(const ModelConfig& cfg);
// q, k, v, o of every layer.
std::vector<std::string> default_lora_targets(const ModelConfig& cfg);

// Gaussian init (std 0.02, residual outputs scaled by 1/sqrt(2 * layers)),
// unit norm gains, zero biases.
BaseWeights init_weights(const ModelConfig& cfg, Rng& rng);

// TLMW container; the vocabulary and config travel in the manifest meta.
std::string encode_base(const BaseWeights& weights, const Vocab& vocab);
void save_base(const BaseWeights& weights, const Vocab& vocab, const std::filesystem::path& path);
struct LoadedBase {
  BaseWeights weights;
  Vocab vocab;
};
LoadedBase decode_base(const TensorContainer& container);
LoadedBase load_base(const std::filesystem::path& path);

template <typename S>
struct BasicForwardOutput {
  MatrixX<S> logits;        // T x V
  MatrixX<S> final_hidden;  // T x H, output of the final norm
};
using ForwardOutput = BasicForwardOutput<float>;

namespace detail {

template <typename S>
struct LinearTrace {
  MatrixX<S> input;
  MatrixX<S> lora_input;    // input after adapter dropout
  MatrixX<S> dropout_mask;  // 0 or 1 / (1 - p); empty when dropout is off
  MatrixX<S> lora_mid;      // lora_input * A^T
};

template <typename S>
struct LayerTrace {
  MatrixX<S> x_in;
  std::vector<NormStats> ln1_stats;
  MatrixX<S> ln1_out;
  LinearTrace<S> q_lin, k_lin, v_lin, o_lin;
  MatrixX<S> q, k, v;
  std::vector<MatrixX<S>> probs;  // per head, T x T, zero above the diagonal
  MatrixX<S> ctx;
  MatrixX<S> x_mid;
  std::vector<NormStats> ln2_stats;
  MatrixX<S> ln2_out;
  LinearTrace<S> up_lin, down_lin;
  MatrixX<S> up_pre;
  MatrixX<S> up_act;
};

template <typename S>
struct ForwardTrace {
  std::vector<int> ids;
  std::vector<LayerTrace<S>> layers;
  MatrixX<S> x_final;
  std::vector<NormStats> final_stats;
  MatrixX<S> final_hidden;
  MatrixX<S> logits;
};

}  // namespace detail

template <typename S>
BasicForwardOutput<S> forward(const BasicWeights<S>& weights, const BasicLoraAdapter<S>* adapter,
                              std::span<const int> ids);

// Keeps every activation the backward pass needs. Adapter dropout is only
// applied when dropout_rng is given.
template <typename S>
detail::ForwardTrace<S> forward_traced(const BasicWeights<S>& weights,
                                       const BasicLoraAdapter<S>* adapter, std::span<const int> ids,
                                       Rng* dropout_rng = nullptr);

// Incremental forward with cached keys and values. Not thread-safe; weights
// and adapter must outlive the session.
template <typename S>
class DecodeSession {
 public:
  DecodeSession(const BasicWeights<S>& weights, const BasicLoraAdapter<S>* adapter);
  ~DecodeSession();
  DecodeSession(DecodeSession&&) noexcept;
  DecodeSession& operator=(DecodeSession&&) noexcept;

  // Appends ids and returns logits / final hidden states for the new rows.
  BasicForwardOutput<S> extend(std::span<const int> ids);
  int length() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Index of the largest entry; ties go to the lowest index.
int argmax(const float* row, Index n);

// Greedy continuation of prompt_ids; stops after EOS (included) or max_new
// tokens. Requires prompt_ids.size() + max_new <= max_seq.
std::vector<int> greedy_decode(const BaseWeights& weights, const LoraAdapter* adapter,
                               std::span<const int> prompt_ids, int max_new);

}  // namespace t2c

#endif  // T2C_MODEL_HPP_
