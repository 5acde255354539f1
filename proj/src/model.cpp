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

#include "t2c/model.hpp"

#include <charconv>
#include <cmath>

namespace t2c {

void ModelConfig::validate() const {
  if (vocab_size < 4) throw ConfigError("model vocab_size must be >= 4");
  if (hidden < 1 || layers < 1 || heads < 1 || ffn_dim < 1) {
    throw ConfigError("model dimensions must be positive");
  }
  if (hidden % heads != 0) throw ConfigError("model hidden size must be divisible by heads");
  if (max_seq < 200) throw ConfigError("model max_seq must be >= 200");
}

nlohmann::json to_json(const ModelConfig& cfg) {
  return {{"vocab_size", cfg.vocab_size}, {"hidden", cfg.hidden},   {"layers", cfg.layers},
          {"heads", cfg.heads},           {"ffn_dim", cfg.ffn_dim}, {"max_seq", cfg.max_seq}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  if (!j.is_object()) throw ConfigError("model config must be an object");
  for (const auto& [key, value] : j.items()) {
    int* slot = nullptr;
    if (key == "vocab_size") slot = &cfg.vocab_size;
    else if (key == "hidden") slot = &cfg.hidden;
    else if (key == "layers") slot = &cfg.layers;
    else if (key == "heads") slot = &cfg.heads;
    else if (key == "ffn_dim") slot = &cfg.ffn_dim;
    else if (key == "max_seq") slot = &cfg.max_seq;
    else throw ConfigError("unknown model config key '" + key + "'");
    if (!value.is_number_integer()) throw ConfigError("model config '" + key + "' must be an integer");
    *slot = value.get<int>();
  }
  return cfg;
}

ShapeMap lora_target_shapes(const ModelConfig& cfg) {
  ShapeMap out;
  const Index h = cfg.hidden, f = cfg.ffn_dim;
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    for (const char* m : {"attn.q", "attn.k", "attn.v", "attn.o"}) out[p + m] = {h, h};
    out[p + "ffn.up"] = {f, h};
    out[p + "ffn.down"] = {h, f};
  }
  return out;
}

std::vector<std::string> default_lora_targets(const ModelConfig& cfg) {
  std::vector<std::string> out;
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    for (const char* m : {"attn.q", "attn.k", "attn.v", "attn.o"}) out.push_back(p + m);
  }
  return out;
}

namespace {

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

bool is_norm_or_bias(const std::string& name) {
  return ends_with(name, ".gain") || ends_with(name, ".bias") || ends_with(name, "_bias");
}

BaseWeights shaped_weights(const ModelConfig& cfg) {
  const Index v = cfg.vocab_size, h = cfg.hidden, f = cfg.ffn_dim, t = cfg.max_seq;
  BaseWeights w;
  w.config = cfg;
  w.tok_emb = Matrix::Zero(v, h);
  w.pos_emb = Matrix::Zero(t, h);
  for (int l = 0; l < cfg.layers; ++l) {
    LayerParams<float> L;
    L.ln1_gain = Matrix::Ones(1, h);
    L.ln1_bias = Matrix::Zero(1, h);
    L.wq = Matrix::Zero(h, h);
    L.wk = Matrix::Zero(h, h);
    L.wv = Matrix::Zero(h, h);
    L.wo = Matrix::Zero(h, h);
    L.ln2_gain = Matrix::Ones(1, h);
    L.ln2_bias = Matrix::Zero(1, h);
    L.w_up = Matrix::Zero(h, f);
    L.b_up = Matrix::Zero(1, f);
    L.w_down = Matrix::Zero(f, h);
    L.b_down = Matrix::Zero(1, h);
    w.layers.push_back(std::move(L));
  }
  w.final_gain = Matrix::Ones(1, h);
  w.final_bias = Matrix::Zero(1, h);
  w.head = Matrix::Zero(h, v);
  return w;
}

}  // namespace

BaseWeights init_weights(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  BaseWeights w = shaped_weights(cfg);
  const double residual_std = 0.02 / std::sqrt(2.0 * cfg.layers);
  w.for_each([&](const std::string& name, Matrix& m) {
    if (is_norm_or_bias(name)) return;
    const double sd = (ends_with(name, "attn.o") || ends_with(name, "ffn.down")) ? residual_std : 0.02;
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(rng.normal(0.0, sd));
  });
  return w;
}

std::string encode_base(const BaseWeights& weights, const Vocab& vocab) {
  if (vocab.size() != weights.config.vocab_size) {
    throw ContractError("vocabulary size " + std::to_string(vocab.size()) +
                        " does not match model vocab_size " +
                        std::to_string(weights.config.vocab_size));
  }
  TensorContainer c;
  c.magic = "TLMW";
  c.meta = {{"config", to_json(weights.config)}, {"vocab", vocab.tokens()}};
  weights.for_each([&](const std::string& name, const Matrix& m) { c.tensors.push_back({name, m}); });
  return encode_container(c);
}

void save_base(const BaseWeights& weights, const Vocab& vocab, const std::filesystem::path& path) {
  write_file(path, encode_base(weights, vocab));
}

LoadedBase decode_base(const TensorContainer& container) {
  if (!container.meta.contains("config") || !container.meta.contains("vocab")) {
    throw FormatError("base weights manifest lacks config or vocab");
  }
  ModelConfig cfg;
  std::vector<std::string> tokens;
  try {
    cfg = model_config_from_json(container.meta.at("config"));
    cfg.validate();
    tokens = container.meta.at("vocab").get<std::vector<std::string>>();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("base weights config: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("base weights manifest: ") + e.what());
  }
  Vocab vocab;
  try {
    vocab = Vocab(std::move(tokens));
  } catch (const std::exception& e) {
    throw FormatError(std::string("base weights vocabulary: ") + e.what());
  }
  if (vocab.size() != cfg.vocab_size) throw FormatError("base weights vocabulary size mismatch");
  BaseWeights w = shaped_weights(cfg);
  std::size_t expected = 0;
  w.for_each([&](const std::string& name, Matrix& m) {
    ++expected;
    const Matrix* found = nullptr;
    for (const auto& t : container.tensors)
      if (t.name == name) found = &t.value;
    if (!found) throw FormatError("base weights missing tensor '" + name + "'");
    if (found->rows() != m.rows() || found->cols() != m.cols()) {
      throw FormatError("tensor '" + name + "' has shape " + std::to_string(found->rows()) + "x" +
                        std::to_string(found->cols()) + ", expected " + std::to_string(m.rows()) +
                        "x" + std::to_string(m.cols()));
    }
    m = *found;
  });
  if (container.tensors.size() != expected) {
    throw FormatError("base weights hold " + std::to_string(container.tensors.size()) +
                      " tensors, expected " + std::to_string(expected));
  }
  return {std::move(w), std::move(vocab)};
}

LoadedBase load_base(const std::filesystem::path& path) {
  return decode_base(read_container(path, "TLMW"));
}

namespace {

template <typename S>
struct LayerLora {
  const LoraPair<S>* q = nullptr;
  const LoraPair<S>* k = nullptr;
  const LoraPair<S>* v = nullptr;
  const LoraPair<S>* o = nullptr;
  const LoraPair<S>* up = nullptr;
  const LoraPair<S>* down = nullptr;
};

template <typename S>
std::vector<LayerLora<S>> resolve_adapter(const BasicWeights<S>& w,
                                          const BasicLoraAdapter<S>* adapter) {
  std::vector<LayerLora<S>> out(w.layers.size());
  if (!adapter) return out;
  const ShapeMap shapes = lora_target_shapes(w.config);
  for (const auto& p : adapter->pairs) {
    auto it = shapes.find(p.target);
    if (it == shapes.end()) throw ContractError("adapter target '" + p.target + "' is not in the model");
    const auto [d, k] = it->second;
    if (p.a.cols() != k || p.b.rows() != d || p.a.rows() != p.b.cols()) {
      throw ContractError("adapter target '" + p.target + "' has mismatched factor shapes");
    }
    // "layers.{l}.{module}"
    const std::size_t dot = p.target.find('.', 7);
    int l = 0;
    std::from_chars(p.target.data() + 7, p.target.data() + dot, l);
    const std::string module = p.target.substr(dot + 1);
    auto& slot = out[static_cast<std::size_t>(l)];
    if (module == "attn.q") slot.q = &p;
    else if (module == "attn.k") slot.k = &p;
    else if (module == "attn.v") slot.v = &p;
    else if (module == "attn.o") slot.o = &p;
    else if (module == "ffn.up") slot.up = &p;
    else slot.down = &p;
  }
  return out;
}

template <typename S>
void norm_rows(const MatrixX<S>& x, const MatrixX<S>& gain, const MatrixX<S>& bias, MatrixX<S>& out,
               std::vector<NormStats>* stats) {
  out.resize(x.rows(), x.cols());
  if (stats) stats->resize(static_cast<std::size_t>(x.rows()));
  for (Index i = 0; i < x.rows(); ++i) {
    const NormStats s =
        layer_norm_row(x.row(i).data(), gain.data(), bias.data(), kNormEps, out.row(i).data(), x.cols());
    if (stats) (*stats)[static_cast<std::size_t>(i)] = s;
  }
}

template <typename S>
S gelu(S x) {
  const double v = static_cast<double>(x);
  constexpr double kC = 0.7978845608028654;  // sqrt(2 / pi)
  return static_cast<S>(0.5 * v * (1.0 + std::tanh(kC * (v + 0.044715 * v * v * v))));
}

template <typename S>
class Engine {
 public:
  Engine(const BasicWeights<S>& w, const BasicLoraAdapter<S>* adapter)
      : w_(w), lora_(resolve_adapter(w, adapter)) {
    if (adapter) {
      scale_ = adapter->spec.scale();
      dropout_ = adapter->spec.dropout;
    }
    const Index t = w.config.max_seq, h = w.config.hidden;
    k_cache_.assign(w.layers.size(), MatrixX<S>(t, h));
    v_cache_.assign(w.layers.size(), MatrixX<S>(t, h));
  }

  int length() const { return length_; }

  BasicForwardOutput<S> run(std::span<const int> ids, detail::ForwardTrace<S>* trace, Rng* rng) {
    const auto& cfg = w_.config;
    const Index n = static_cast<Index>(ids.size());
    const Index t0 = length_;
    if (n == 0) throw ContractError("forward: empty token sequence");
    if (t0 + n > cfg.max_seq) {
      throw ContractError("forward: sequence length " + std::to_string(t0 + n) + " exceeds max_seq " +
                          std::to_string(cfg.max_seq));
    }
    const Index h = cfg.hidden;
    MatrixX<S> x(n, h);
    for (Index i = 0; i < n; ++i) {
      const int id = ids[static_cast<std::size_t>(i)];
      if (id < 0 || id >= cfg.vocab_size) throw ContractError("forward: token id out of range");
      x.row(i) = w_.tok_emb.row(id) + w_.pos_emb.row(t0 + i);
    }
    if (trace) {
      trace->ids.assign(ids.begin(), ids.end());
      trace->layers.assign(w_.layers.size(), detail::LayerTrace<S>{});
    }
    for (std::size_t l = 0; l < w_.layers.size(); ++l) {
      x = layer(l, x, t0, trace ? &trace->layers[l] : nullptr, rng);
    }
    BasicForwardOutput<S> out;
    norm_rows(x, w_.final_gain, w_.final_bias, out.final_hidden, trace ? &trace->final_stats : nullptr);
    out.logits = matmul(out.final_hidden, w_.head);
    if (trace) {
      trace->x_final = x;
      trace->final_hidden = out.final_hidden;
      trace->logits = out.logits;
    }
    length_ += static_cast<int>(n);
    return out;
  }

 private:
  MatrixX<S> linear(const MatrixX<S>& x, const MatrixX<S>& w, const MatrixX<S>* bias,
                    const LoraPair<S>* lora, detail::LinearTrace<S>* tr, Rng* rng) const {
    MatrixX<S> y = matmul(x, w);
    if (bias) {
      for (Index i = 0; i < y.rows(); ++i) y.row(i) += *bias;
    }
    if (tr) tr->input = x;
    if (!lora) return y;
    MatrixX<S> dropped, mask;
    const MatrixX<S>* src = &x;
    if (rng && dropout_ > 0.0) {
      dropped.resize(x.rows(), x.cols());
      mask.resize(x.rows(), x.cols());
      const S keep_scale = static_cast<S>(1.0 / (1.0 - dropout_));
      for (Index i = 0; i < x.size(); ++i) {
        mask.data()[i] = rng->uniform() >= dropout_ ? keep_scale : S(0);
        dropped.data()[i] = x.data()[i] * mask.data()[i];
      }
      src = &dropped;
    }
    MatrixX<S> mid = matmul_nt(*src, lora->a);
    const MatrixX<S> delta = matmul_nt(mid, lora->b);
    y.array() += static_cast<S>(scale_) * delta.array();
    if (tr) {
      tr->lora_input = src == &x ? x : std::move(dropped);
      tr->dropout_mask = std::move(mask);
      tr->lora_mid = std::move(mid);
    }
    return y;
  }

  MatrixX<S> layer(std::size_t l, const MatrixX<S>& x, Index t0, detail::LayerTrace<S>* tr, Rng* rng) {
    const auto& L = w_.layers[l];
    const auto& A = lora_[l];
    const Index n = x.rows(), h = x.cols();
    const int heads = w_.config.heads;
    const Index dh = w_.config.head_dim();
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

    MatrixX<S> a;
    norm_rows(x, L.ln1_gain, L.ln1_bias, a, tr ? &tr->ln1_stats : nullptr);
    MatrixX<S> q = linear(a, L.wq, nullptr, A.q, tr ? &tr->q_lin : nullptr, rng);
    MatrixX<S> k = linear(a, L.wk, nullptr, A.k, tr ? &tr->k_lin : nullptr, rng);
    MatrixX<S> v = linear(a, L.wv, nullptr, A.v, tr ? &tr->v_lin : nullptr, rng);
    MatrixX<S>& kc = k_cache_[l];
    MatrixX<S>& vc = v_cache_[l];
    kc.middleRows(t0, n) = k;
    vc.middleRows(t0, n) = v;

    MatrixX<S> ctx(n, h);
    if (tr) tr->probs.assign(static_cast<std::size_t>(heads), MatrixX<S>::Zero(n, t0 + n));
    std::vector<S> p(static_cast<std::size_t>(t0 + n));
    std::vector<double> acc(static_cast<std::size_t>(dh));
    for (int hd = 0; hd < heads; ++hd) {
      const Index off = hd * dh;
      for (Index i = 0; i < n; ++i) {
        const Index t = t0 + i;
        const S* qi = q.row(i).data() + off;
        for (Index s = 0; s <= t; ++s) {
          const S* ks = kc.row(s).data() + off;
          double dot = 0.0;
          for (Index d = 0; d < dh; ++d) dot += static_cast<double>(qi[d]) * static_cast<double>(ks[d]);
          p[static_cast<std::size_t>(s)] = static_cast<S>(dot * inv_sqrt);
        }
        softmax_inplace(p.data(), t + 1);
        std::fill(acc.begin(), acc.end(), 0.0);
        for (Index s = 0; s <= t; ++s) {
          const double ps = static_cast<double>(p[static_cast<std::size_t>(s)]);
          const S* vs = vc.row(s).data() + off;
          for (Index d = 0; d < dh; ++d) acc[d] += ps * static_cast<double>(vs[d]);
        }
        for (Index d = 0; d < dh; ++d) ctx(i, off + d) = static_cast<S>(acc[d]);
        if (tr) {
          for (Index s = 0; s <= t; ++s) tr->probs[hd](i, s) = p[static_cast<std::size_t>(s)];
        }
      }
    }
    const MatrixX<S> o = linear(ctx, L.wo, nullptr, A.o, tr ? &tr->o_lin : nullptr, rng);
    MatrixX<S> x_mid = x + o;

    MatrixX<S> b;
    norm_rows(x_mid, L.ln2_gain, L.ln2_bias, b, tr ? &tr->ln2_stats : nullptr);
    MatrixX<S> up_pre = linear(b, L.w_up, &L.b_up, A.up, tr ? &tr->up_lin : nullptr, rng);
    MatrixX<S> up_act = up_pre.unaryExpr([](S z) { return gelu(z); });
    const MatrixX<S> down = linear(up_act, L.w_down, &L.b_down, A.down, tr ? &tr->down_lin : nullptr, rng);
    MatrixX<S> out = x_mid + down;
    if (tr) {
      tr->x_in = x;
      tr->ln1_out = std::move(a);
      tr->q = std::move(q);
      tr->k = std::move(k);
      tr->v = std::move(v);
      tr->ctx = std::move(ctx);
      tr->x_mid = std::move(x_mid);
      tr->ln2_out = std::move(b);
      tr->up_pre = std::move(up_pre);
      tr->up_act = std::move(up_act);
    }
    return out;
  }

  const BasicWeights<S>& w_;
  std::vector<LayerLora<S>> lora_;
  double scale_ = 0.0;
  double dropout_ = 0.0;
  std::vector<MatrixX<S>> k_cache_, v_cache_;
  int length_ = 0;
};

}  // namespace

template <typename S>
BasicForwardOutput<S> forward(const BasicWeights<S>& weights, const BasicLoraAdapter<S>* adapter,
                              std::span<const int> ids) {
  Engine<S> engine(weights, adapter);
  return engine.run(ids, nullptr, nullptr);
}

template <typename S>
detail::ForwardTrace<S> forward_traced(const BasicWeights<S>& weights,
                                       const BasicLoraAdapter<S>* adapter, std::span<const int> ids,
                                       Rng* dropout_rng) {
  Engine<S> engine(weights, adapter);
  detail::ForwardTrace<S> trace;
  engine.run(ids, &trace, dropout_rng);
  return trace;
}

template <typename S>
struct DecodeSession<S>::Impl {
  Engine<S> engine;
};

template <typename S>
DecodeSession<S>::DecodeSession(const BasicWeights<S>& weights, const BasicLoraAdapter<S>* adapter)
    : impl_(std::make_unique<Impl>(Impl{Engine<S>(weights, adapter)})) {}

template <typename S>
DecodeSession<S>::~DecodeSession() = default;
template <typename S>
DecodeSession<S>::DecodeSession(DecodeSession&&) noexcept = default;
template <typename S>
DecodeSession<S>& DecodeSession<S>::operator=(DecodeSession&&) noexcept = default;

template <typename S>
BasicForwardOutput<S> DecodeSession<S>::extend(std::span<const int> ids) {
  return impl_->engine.run(ids, nullptr, nullptr);
}

template <typename S>
int DecodeSession<S>::length() const {
  return impl_->engine.length();
}

int argmax(const float* row, Index n) {
  require(n > 0, "argmax: empty row");
  Index best = 0;
  for (Index i = 1; i < n; ++i)
    if (row[i] > row[best]) best = i;
  return static_cast<int>(best);
}

std::vector<int> greedy_decode(const BaseWeights& weights, const LoraAdapter* adapter,
                               std::span<const int> prompt_ids, int max_new) {
  require(!prompt_ids.empty(), "greedy_decode: empty prompt");
  require(max_new >= 0, "greedy_decode: negative max_new");
  require(static_cast<Index>(prompt_ids.size()) + max_new <= weights.config.max_seq,
          "greedy_decode: prompt plus generation exceeds max_seq");
  std::vector<int> out;
  if (max_new == 0) return out;
  DecodeSession<float> session(weights, adapter);
  ForwardOutput step = session.extend(prompt_ids);
  while (true) {
    const Index last = step.logits.rows() - 1;
    const int tok = argmax(step.logits.row(last).data(), step.logits.cols());
    out.push_back(tok);
    if (tok == Vocab::kEos || static_cast<int>(out.size()) == max_new) break;
    const int next[1] = {tok};
    step = session.extend(next);
  }
  return out;
}

template BasicForwardOutput<float> forward(const BasicWeights<float>&, const BasicLoraAdapter<float>*,
                                           std::span<const int>);
template BasicForwardOutput<double> forward(const BasicWeights<double>&,
                                            const BasicLoraAdapter<double>*, std::span<const int>);
template detail::ForwardTrace<float> forward_traced(const BasicWeights<float>&,
                                                    const BasicLoraAdapter<float>*,
                                                    std::span<const int>, Rng*);
template detail::ForwardTrace<double> forward_traced(const BasicWeights<double>&,
                                                     const BasicLoraAdapter<double>*,
                                                     std::span<const int>, Rng*);
template class DecodeSession<float>;
template class DecodeSession<double>;

}  // namespace t2c
