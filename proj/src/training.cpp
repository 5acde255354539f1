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

#include "t2c/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <set>

namespace t2c {

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be a finite non-negative number");
  }
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (grad_accum < 1) throw ConfigError("grad_accum must be >= 1");
  if (warmup_steps < 0) throw ConfigError("warmup_steps must be >= 0");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (!(clip_norm > 0.0)) throw ConfigError("clip_norm must be > 0");
}

nlohmann::json to_json(const TrainConfig& cfg) {
  return {{"learning_rate", cfg.learning_rate}, {"batch_size", cfg.batch_size},
          {"grad_accum", cfg.grad_accum},       {"warmup_steps", cfg.warmup_steps},
          {"epochs", cfg.epochs},               {"weight_decay", cfg.weight_decay},
          {"clip_norm", cfg.clip_norm},         {"seed", cfg.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig cfg) {
  if (!j.is_object()) throw ConfigError("train config must be an object");
  auto number = [](const std::string& key, const nlohmann::json& v) {
    if (!v.is_number()) throw ConfigError("train config '" + key + "' must be a number");
    return v.get<double>();
  };
  auto integer = [](const std::string& key, const nlohmann::json& v) {
    if (!v.is_number_integer()) throw ConfigError("train config '" + key + "' must be an integer");
    return v.get<long long>();
  };
  for (const auto& [key, v] : j.items()) {
    if (key == "learning_rate") cfg.learning_rate = number(key, v);
    else if (key == "batch_size") cfg.batch_size = static_cast<int>(integer(key, v));
    else if (key == "grad_accum") cfg.grad_accum = static_cast<int>(integer(key, v));
    else if (key == "warmup_steps") cfg.warmup_steps = static_cast<int>(integer(key, v));
    else if (key == "epochs") cfg.epochs = static_cast<int>(integer(key, v));
    else if (key == "weight_decay") cfg.weight_decay = number(key, v);
    else if (key == "clip_norm") cfg.clip_norm = number(key, v);
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(integer(key, v));
    else throw ConfigError("unknown train config key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

nlohmann::json TrainReport::to_json() const {
  return {{"step_losses", step_losses}, {"initial_loss", initial_loss},
          {"final_loss", final_loss},   {"wall_seconds", wall_seconds},
          {"instance_count", instance_count}, {"steps", steps}};
}

namespace {

std::vector<int> gold_ids(const std::string& gold, const Vocab& vocab) {
  std::vector<int> ids = tokenize(gold, vocab);
  ids.erase(ids.begin());  // BOS
  ids.push_back(Vocab::kEos);
  return ids;
}

}  // namespace

Example make_example(const Sample& sample, const Vocab& vocab) {
  Example ex;
  ex.ids = tokenize(sample.prompt, vocab);
  ex.target_start = ex.ids.size();
  const std::vector<int> g = gold_ids(sample.gold, vocab);
  ex.ids.insert(ex.ids.end(), g.begin(), g.end());
  return ex;
}

Example make_pretrain_example(const Sample& sample, const Vocab& vocab) {
  Example ex = make_example(sample, vocab);
  ex.target_start = 1;
  return ex;
}

double lr_at(const TrainConfig& cfg, int step, int total_steps) {
  if (step < cfg.warmup_steps) {
    return cfg.learning_rate * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  }
  if (total_steps <= cfg.warmup_steps) return cfg.learning_rate;
  const double remaining = static_cast<double>(std::max(total_steps - step, 0));
  return cfg.learning_rate * remaining / static_cast<double>(total_steps - cfg.warmup_steps);
}

namespace {

template <typename S>
void add_column_sums(const MatrixX<S>& dy, MatrixX<S>& target) {
  for (Index j = 0; j < dy.cols(); ++j) {
    double acc = 0.0;
    for (Index i = 0; i < dy.rows(); ++i) acc += static_cast<double>(dy(i, j));
    target(0, j) += static_cast<S>(acc);
  }
}

// Returns dx; accumulates dgain / dbias when given.
template <typename S>
MatrixX<S> norm_backward(const MatrixX<S>& x, const std::vector<NormStats>& stats,
                         const MatrixX<S>& gain, const MatrixX<S>& dy, MatrixX<S>* dgain,
                         MatrixX<S>* dbias) {
  const Index n = x.cols();
  MatrixX<S> dx(x.rows(), n);
  std::vector<double> xhat(static_cast<std::size_t>(n)), dxhat(static_cast<std::size_t>(n));
  std::vector<double> g_acc(dgain ? n : 0, 0.0), b_acc(dbias ? n : 0, 0.0);
  for (Index i = 0; i < x.rows(); ++i) {
    const NormStats& st = stats[static_cast<std::size_t>(i)];
    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
    for (Index c = 0; c < n; ++c) {
      xhat[c] = (static_cast<double>(x(i, c)) - st.mean) * st.inv_std;
      dxhat[c] = static_cast<double>(dy(i, c)) * static_cast<double>(gain(0, c));
      mean_dxhat += dxhat[c];
      mean_dxhat_xhat += dxhat[c] * xhat[c];
      if (dgain) g_acc[c] += static_cast<double>(dy(i, c)) * xhat[c];
      if (dbias) b_acc[c] += static_cast<double>(dy(i, c));
    }
    mean_dxhat /= static_cast<double>(n);
    mean_dxhat_xhat /= static_cast<double>(n);
    for (Index c = 0; c < n; ++c) {
      dx(i, c) = static_cast<S>(st.inv_std * (dxhat[c] - mean_dxhat - xhat[c] * mean_dxhat_xhat));
    }
  }
  for (Index c = 0; dgain && c < n; ++c) (*dgain)(0, c) += static_cast<S>(g_acc[c]);
  for (Index c = 0; dbias && c < n; ++c) (*dbias)(0, c) += static_cast<S>(b_acc[c]);
  return dx;
}

// Backward of y = x * W (+ b) (+ s * (x_d * A^T) * B^T). Returns dx when
// want_dx is set.
template <typename S>
MatrixX<S> linear_backward(const detail::LinearTrace<S>& tr, const MatrixX<S>& w,
                           const LoraPair<S>* lora, double scale, const MatrixX<S>& dy,
                           MatrixX<S>* dw, MatrixX<S>* db, LoraPair<S>* dlora, bool want_dx) {
  MatrixX<S> dx;
  if (want_dx) dx = matmul_nt(dy, w);
  if (dw) *dw += matmul_tn(tr.input, dy);
  if (db) add_column_sums(dy, *db);
  if (lora) {
    const S s = static_cast<S>(scale);
    MatrixX<S> dmid = matmul(dy, lora->b);
    dmid *= s;
    if (dlora) {
      const MatrixX<S> gb = matmul_tn(dy, tr.lora_mid);
      dlora->b.array() += s * gb.array();
      dlora->a += matmul_tn(dmid, tr.lora_input);
    }
    if (want_dx) {
      MatrixX<S> dxd = matmul(dmid, lora->a);
      if (tr.dropout_mask.size() > 0) dxd.array() *= tr.dropout_mask.array();
      dx += dxd;
    }
  }
  return dx;
}

template <typename S>
S gelu_grad(S z) {
  const double x = static_cast<double>(z);
  constexpr double kC = 0.7978845608028654;
  const double u = kC * (x + 0.044715 * x * x * x);
  const double th = std::tanh(u);
  return static_cast<S>(0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * kC * (1.0 + 3.0 * 0.044715 * x * x));
}

template <typename S>
struct LoraSlots {
  const LoraPair<S>* q = nullptr;
  const LoraPair<S>* k = nullptr;
  const LoraPair<S>* v = nullptr;
  const LoraPair<S>* o = nullptr;
  const LoraPair<S>* up = nullptr;
  const LoraPair<S>* down = nullptr;
  LoraPair<S>* dq = nullptr;
  LoraPair<S>* dk = nullptr;
  LoraPair<S>* dv = nullptr;
  LoraPair<S>* d_o = nullptr;
  LoraPair<S>* dup = nullptr;
  LoraPair<S>* ddown = nullptr;
};

template <typename S>
LoraSlots<S> slots_for(std::size_t l, const BasicLoraAdapter<S>* adapter, BasicLoraAdapter<S>* grads) {
  LoraSlots<S> s;
  if (!adapter) return s;
  const std::string p = "layers." + std::to_string(l) + ".";
  s.q = adapter->find(p + "attn.q");
  s.k = adapter->find(p + "attn.k");
  s.v = adapter->find(p + "attn.v");
  s.o = adapter->find(p + "attn.o");
  s.up = adapter->find(p + "ffn.up");
  s.down = adapter->find(p + "ffn.down");
  if (grads) {
    s.dq = grads->find(p + "attn.q");
    s.dk = grads->find(p + "attn.k");
    s.dv = grads->find(p + "attn.v");
    s.d_o = grads->find(p + "attn.o");
    s.dup = grads->find(p + "ffn.up");
    s.ddown = grads->find(p + "ffn.down");
  }
  return s;
}

// Propagates dlogits through the network. Base gradients are accumulated into
// gw and adapter gradients into gl when those are non-null.
template <typename S>
void backward(const BasicWeights<S>& w, const BasicLoraAdapter<S>* adapter,
              const detail::ForwardTrace<S>& tr, const MatrixX<S>& dlogits, BasicWeights<S>* gw,
              BasicLoraAdapter<S>* gl) {
  const double scale = adapter ? adapter->spec.scale() : 0.0;
  const Index T = static_cast<Index>(tr.ids.size());
  const int heads = w.config.heads;
  const Index dh = w.config.head_dim();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  if (gw) gw->head += matmul_tn(tr.final_hidden, dlogits);
  MatrixX<S> d_hf = matmul_nt(dlogits, w.head);
  MatrixX<S> dx = norm_backward(tr.x_final, tr.final_stats, w.final_gain, d_hf,
                                gw ? &gw->final_gain : nullptr, gw ? &gw->final_bias : nullptr);

  for (std::size_t li = w.layers.size(); li-- > 0;) {
    const auto& L = w.layers[li];
    const auto& lt = tr.layers[li];
    LayerParams<S>* gL = gw ? &gw->layers[li] : nullptr;
    const LoraSlots<S> ls = slots_for(li, adapter, gl);
    const bool need_input_grad = gw != nullptr || li > 0;

    // x_out = x_mid + down(gelu(up(LN2(x_mid))))
    MatrixX<S> d_act = linear_backward<S>(lt.down_lin, L.w_down, ls.down, scale, dx,
                                       gL ? &gL->w_down : nullptr, gL ? &gL->b_down : nullptr,
                                       ls.ddown, true);
    for (Index i = 0; i < d_act.size(); ++i) d_act.data()[i] *= gelu_grad(lt.up_pre.data()[i]);
    MatrixX<S> d_ln2 = linear_backward<S>(lt.up_lin, L.w_up, ls.up, scale, d_act,
                                       gL ? &gL->w_up : nullptr, gL ? &gL->b_up : nullptr, ls.dup, true);
    MatrixX<S> d_xmid = dx + norm_backward(lt.x_mid, lt.ln2_stats, L.ln2_gain, d_ln2,
                                           gL ? &gL->ln2_gain : nullptr, gL ? &gL->ln2_bias : nullptr);

    // x_mid = x_in + o(attn(LN1(x_in)))
    const MatrixX<S> d_ctx = linear_backward<S>(lt.o_lin, L.wo, ls.o, scale, d_xmid,
                                             gL ? &gL->wo : nullptr, nullptr, ls.d_o, true);
    MatrixX<double> dq = MatrixX<double>::Zero(T, lt.q.cols());
    MatrixX<double> dk = MatrixX<double>::Zero(T, lt.k.cols());
    MatrixX<double> dv = MatrixX<double>::Zero(T, lt.v.cols());
    std::vector<double> dp(static_cast<std::size_t>(T));
    for (int hd = 0; hd < heads; ++hd) {
      const Index off = hd * dh;
      const MatrixX<S>& P = lt.probs[static_cast<std::size_t>(hd)];
      for (Index i = 0; i < T; ++i) {
        double dot_sum = 0.0;
        for (Index s = 0; s <= i; ++s) {
          double acc = 0.0;
          const double p = static_cast<double>(P(i, s));
          for (Index d = 0; d < dh; ++d) {
            const double g = static_cast<double>(d_ctx(i, off + d));
            acc += g * static_cast<double>(lt.v(s, off + d));
            dv(s, off + d) += p * g;
          }
          dp[s] = acc;
          dot_sum += p * acc;
        }
        for (Index s = 0; s <= i; ++s) {
          const double ds = static_cast<double>(P(i, s)) * (dp[s] - dot_sum) * inv_sqrt;
          for (Index d = 0; d < dh; ++d) {
            dq(i, off + d) += ds * static_cast<double>(lt.k(s, off + d));
            dk(s, off + d) += ds * static_cast<double>(lt.q(i, off + d));
          }
        }
      }
    }
    const MatrixX<S> dqs = dq.template cast<S>(), dks = dk.template cast<S>(), dvs = dv.template cast<S>();
    MatrixX<S> d_ln1 = linear_backward<S>(lt.q_lin, L.wq, ls.q, scale, dqs, gL ? &gL->wq : nullptr,
                                       nullptr, ls.dq, need_input_grad);
    MatrixX<S> d_ln1_k = linear_backward<S>(lt.k_lin, L.wk, ls.k, scale, dks, gL ? &gL->wk : nullptr,
                                         nullptr, ls.dk, need_input_grad);
    MatrixX<S> d_ln1_v = linear_backward<S>(lt.v_lin, L.wv, ls.v, scale, dvs, gL ? &gL->wv : nullptr,
                                         nullptr, ls.dv, need_input_grad);
    if (!need_input_grad) break;
    d_ln1 += d_ln1_k;
    d_ln1 += d_ln1_v;
    dx = d_xmid + norm_backward(lt.x_in, lt.ln1_stats, L.ln1_gain, d_ln1,
                                gL ? &gL->ln1_gain : nullptr, gL ? &gL->ln1_bias : nullptr);
  }

  if (gw) {
    for (Index t = 0; t < T; ++t) {
      gw->tok_emb.row(tr.ids[static_cast<std::size_t>(t)]) += dx.row(t);
      gw->pos_emb.row(t) += dx.row(t);
    }
  }
}

// Summed cross-entropy over ex's targets; gradients of grad_scale * sum are
// accumulated into gw / gl.
template <typename S>
double example_backward(const BasicWeights<S>& w, const BasicLoraAdapter<S>* adapter,
                        const Example& ex, BasicWeights<S>* gw, BasicLoraAdapter<S>* gl,
                        Rng* dropout_rng, double grad_scale) {
  require(ex.target_start >= 1 && ex.target_start < ex.ids.size(), "example has no targets");
  const detail::ForwardTrace<S> tr = forward_traced(w, adapter, ex.ids, dropout_rng);
  const Index T = static_cast<Index>(ex.ids.size()), V = tr.logits.cols();
  MatrixX<S> dlogits = MatrixX<S>::Zero(T, V);
  double loss = 0.0;
  std::vector<double> e(static_cast<std::size_t>(V));
  for (Index t = static_cast<Index>(ex.target_start) - 1; t + 1 < T; ++t) {
    const int target = ex.ids[static_cast<std::size_t>(t + 1)];
    double mx = static_cast<double>(tr.logits(t, 0));
    for (Index j = 1; j < V; ++j) mx = std::max(mx, static_cast<double>(tr.logits(t, j)));
    double total = 0.0;
    for (Index j = 0; j < V; ++j) {
      e[j] = std::exp(static_cast<double>(tr.logits(t, j)) - mx);
      total += e[j];
    }
    loss += std::log(total) + mx - static_cast<double>(tr.logits(t, target));
    for (Index j = 0; j < V; ++j) {
      const double p = e[j] / total - (j == target ? 1.0 : 0.0);
      dlogits(t, j) = static_cast<S>(p * grad_scale);
    }
  }
  if (std::isfinite(loss) && (gw || gl)) backward(w, adapter, tr, dlogits, gw, gl);
  return loss;
}

std::size_t count_targets(std::span<const Example> batch) {
  std::size_t n = 0;
  for (const auto& ex : batch) n += ex.target_count();
  return n;
}

}  // namespace

template <typename S>
double loss_and_grads(const BasicWeights<S>& base, const BasicLoraAdapter<S>& adapter,
                      std::span<const Example> batch, BasicLoraAdapter<S>& grads, Rng* dropout_rng) {
  require(!batch.empty(), "loss_and_grads: empty batch");
  grads = adapter.zeros_like();
  const double inv = 1.0 / static_cast<double>(count_targets(batch));
  double loss = 0.0;
  for (const auto& ex : batch) loss += example_backward<S>(base, &adapter, ex, nullptr, &grads, dropout_rng, inv);
  return loss * inv;
}

template <typename S>
double base_loss_and_grads(const BasicWeights<S>& weights, std::span<const Example> batch,
                           BasicWeights<S>& grads) {
  require(!batch.empty(), "base_loss_and_grads: empty batch");
  grads = weights.zeros_like();
  const double inv = 1.0 / static_cast<double>(count_targets(batch));
  double loss = 0.0;
  for (const auto& ex : batch) {
    loss += example_backward<S>(weights, nullptr, ex, &grads, nullptr, nullptr, inv);
  }
  return loss * inv;
}

template double loss_and_grads(const BasicWeights<float>&, const BasicLoraAdapter<float>&,
                               std::span<const Example>, BasicLoraAdapter<float>&, Rng*);
template double loss_and_grads(const BasicWeights<double>&, const BasicLoraAdapter<double>&,
                               std::span<const Example>, BasicLoraAdapter<double>&, Rng*);
template double base_loss_and_grads(const BasicWeights<float>&, std::span<const Example>,
                                    BasicWeights<float>&);
template double base_loss_and_grads(const BasicWeights<double>&, std::span<const Example>,
                                    BasicWeights<double>&);

double batch_loss(const BaseWeights& base, const LoraAdapter* adapter, std::span<const Example> batch) {
  require(!batch.empty(), "batch_loss: empty batch");
  double loss = 0.0;
  for (const auto& ex : batch) {
    loss += example_backward<float>(base, adapter, ex, nullptr, nullptr, nullptr, 0.0);
  }
  return loss / static_cast<double>(count_targets(batch));
}

AdamW::AdamW(std::vector<Matrix*> params, std::vector<bool> decay)
    : params_(std::move(params)), decay_(std::move(decay)) {
  require(params_.size() == decay_.size(), "AdamW: decay flags do not match parameters");
  for (const Matrix* p : params_) {
    m_.push_back(Matrix::Zero(p->rows(), p->cols()));
    v_.push_back(Matrix::Zero(p->rows(), p->cols()));
  }
}

void AdamW::step(const std::vector<const Matrix*>& grads, double lr, double weight_decay) {
  require(grads.size() == params_.size(), "AdamW: gradient count mismatch");
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  ++t_;
  const double c1 = 1.0 - std::pow(kBeta1, t_);
  const double c2 = 1.0 - std::pow(kBeta2, t_);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Matrix& p = *params_[k];
    const Matrix& g = *grads[k];
    require(g.rows() == p.rows() && g.cols() == p.cols(), "AdamW: gradient shape mismatch");
    const double wd = decay_[k] ? weight_decay : 0.0;
    for (Index i = 0; i < p.size(); ++i) {
      const double gi = static_cast<double>(g.data()[i]);
      const double m = kBeta1 * static_cast<double>(m_[k].data()[i]) + (1.0 - kBeta1) * gi;
      const double v = kBeta2 * static_cast<double>(v_[k].data()[i]) + (1.0 - kBeta2) * gi * gi;
      m_[k].data()[i] = static_cast<float>(m);
      v_[k].data()[i] = static_cast<float>(v);
      const double x = static_cast<double>(p.data()[i]);
      const double update = (m / c1) / (std::sqrt(v / c2) + kEps) + wd * x;
      p.data()[i] = static_cast<float>(x - lr * update);
    }
  }
}

double clip_global_norm(const std::vector<Matrix*>& grads, double max_norm) {
  double sq = 0.0;
  for (const Matrix* g : grads)
    for (Index i = 0; i < g->size(); ++i) sq += static_cast<double>(g->data()[i]) * g->data()[i];
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double f = max_norm / norm;
    for (Matrix* g : grads)
      for (Index i = 0; i < g->size(); ++i) g->data()[i] = static_cast<float>(g->data()[i] * f);
  }
  return norm;
}

namespace {

bool no_decay(const std::string& name) {
  auto ends = [&](std::string_view s) {
    return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0;
  };
  return ends(".gain") || ends(".bias") || ends("_bias");
}

struct ParamList {
  std::vector<Matrix*> params;
  std::vector<bool> decay;
};

ParamList params_of(LoraAdapter& a) {
  ParamList out;
  for (auto& p : a.pairs) {
    out.params.push_back(&p.a);
    out.params.push_back(&p.b);
  }
  out.decay.assign(out.params.size(), true);
  return out;
}

ParamList params_of(BaseWeights& w) {
  ParamList out;
  w.for_each([&](const std::string& name, Matrix& m) {
    out.params.push_back(&m);
    out.decay.push_back(!no_decay(name));
  });
  return out;
}

void zero(std::vector<Matrix*>& ms) {
  for (Matrix* m : ms) m->setZero();
}

// micro(model, batch, grads, grad_scale, dropout_rng) returns summed loss.
template <typename Model, typename Micro>
TrainReport fit(Model& model, const std::vector<Example>& data, const TrainConfig& cfg, Micro&& micro) {
  cfg.validate();
  const auto t_start = std::chrono::steady_clock::now();
  Rng rng(cfg.seed);
  Rng order_rng = rng.split();
  Rng dropout_rng = rng.split();
  ParamList params = params_of(model);
  Model grads = model.zeros_like();
  ParamList gparams = params_of(grads);
  std::vector<const Matrix*> gconst(gparams.params.begin(), gparams.params.end());
  AdamW opt(params.params, params.decay);

  const std::size_t n = data.size();
  const std::size_t eff = static_cast<std::size_t>(cfg.effective_batch());
  const int steps_per_epoch = static_cast<int>((n + eff - 1) / eff);
  const int total = steps_per_epoch * cfg.epochs;
  TrainReport report;
  report.instance_count = static_cast<std::int64_t>(n) * cfg.epochs;
  int step = 0;
  std::int64_t batch_index = 0;
  std::vector<Example> micro_batch;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    order_rng.shuffle(order);
    for (std::size_t start = 0; start < n; start += eff) {
      const std::size_t end = std::min(n, start + eff);
      std::size_t tokens = 0;
      for (std::size_t i = start; i < end; ++i) tokens += data[order[i]].target_count();
      require(tokens > 0, "training batch has no target tokens");
      const double inv = 1.0 / static_cast<double>(tokens);
      zero(gparams.params);
      double loss = 0.0;
      for (std::size_t m = start; m < end; m += static_cast<std::size_t>(cfg.batch_size)) {
        micro_batch.clear();
        for (std::size_t i = m; i < std::min(end, m + cfg.batch_size); ++i) micro_batch.push_back(data[order[i]]);
        const double l = micro(model, micro_batch, grads, inv, dropout_rng);
        if (!std::isfinite(l)) {
          throw TrainingError("non-finite loss at batch " + std::to_string(batch_index));
        }
        loss += l;
        ++batch_index;
      }
      clip_global_norm(gparams.params, cfg.clip_norm);
      opt.step(gconst, lr_at(cfg, step, total), cfg.weight_decay);
      report.step_losses.push_back(loss * inv);
      ++step;
    }
  }
  report.steps = step;
  if (!report.step_losses.empty()) {
    report.initial_loss = report.step_losses.front();
    const std::size_t k = std::min<std::size_t>(10, report.step_losses.size());
    double tail = 0.0;
    for (std::size_t i = report.step_losses.size() - k; i < report.step_losses.size(); ++i) {
      tail += report.step_losses[i];
    }
    report.final_loss = tail / static_cast<double>(k);
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return report;
}

std::vector<Example> examples_for(const std::vector<Sample>& samples, const Vocab& vocab) {
  std::vector<Example> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(make_example(s, vocab));
  return out;
}

LoraAdapter fresh_adapter(const BaseWeights& base, LoraSpec lora, std::string tag, std::uint64_t seed) {
  if (lora.target_modules.empty()) lora.target_modules = default_lora_targets(base.config);
  lora.language_tag = std::move(tag);
  Rng rng(seed ^ 0x5eedULL);
  return init_adapter(lora, lora_target_shapes(base.config), rng);
}

}  // namespace

AdapterTrainResult fit_adapter(const BaseWeights& base, LoraAdapter adapter,
                               const std::vector<Example>& data, const TrainConfig& cfg) {
  TrainReport report =
      fit(adapter, data, cfg,
          [&](const LoraAdapter& a, const std::vector<Example>& batch, LoraAdapter& grads, double inv,
              Rng& dropout_rng) {
            double loss = 0.0;
            for (const auto& ex : batch) {
              loss += example_backward<float>(base, &a, ex, nullptr, &grads, &dropout_rng, inv);
            }
            return loss;
          });
  return {std::move(adapter), std::move(report)};
}

AdapterTrainResult train_adapter(const BaseWeights& base, const Vocab& vocab, Language lang,
                                 const ParallelCorpus& corpus, LoraSpec lora, const TrainConfig& cfg) {
  const std::vector<Sample> split = corpus.train(lang);
  if (split.empty()) throw ConfigError("corpus has no training split for " + to_string(lang));
  LoraAdapter adapter = fresh_adapter(base, std::move(lora), to_string(lang), cfg.seed);
  return fit_adapter(base, std::move(adapter), examples_for(split, vocab), cfg);
}

AdapterTrainResult train_adapter(const BaseWeights& base, const Vocab& vocab, std::string_view lang,
                                 const ParallelCorpus& corpus, LoraSpec lora, const TrainConfig& cfg) {
  return train_adapter(base, vocab, parse_language(lang), corpus, std::move(lora), cfg);
}

AdapterTrainResult train_joint(const BaseWeights& base, const Vocab& vocab,
                               const ParallelCorpus& corpus, LoraSpec lora, const TrainConfig& cfg) {
  std::vector<Sample> all;
  for (Language lang : kLanguages) {
    const std::vector<Sample> split = corpus.train(lang);
    if (split.empty()) throw ConfigError("corpus has no training split for " + to_string(lang));
    all.insert(all.end(), split.begin(), split.end());
  }
  LoraAdapter adapter = fresh_adapter(base, std::move(lora), "joint", cfg.seed);
  return fit_adapter(base, std::move(adapter), examples_for(all, vocab), cfg);
}

std::vector<std::size_t> pretrain_mixture(const ParallelCorpus& corpus, Rng& rng) {
  std::array<std::vector<std::size_t>, 3> by_lang;
  for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
    const Sample& s = corpus.samples[i];
    if (s.split == "train") by_lang[index_of(s.language)].push_back(i);
  }
  const std::size_t n1 = by_lang[0].size();
  const std::array<std::size_t, 3> want = {n1, (n1 * 20 + 35) / 70, (n1 * 10 + 35) / 70};
  std::vector<std::size_t> out;
  for (std::size_t l = 0; l < 3; ++l) {
    std::vector<std::size_t>& pool = by_lang[l];
    if (l > 0) rng.shuffle(pool);
    const std::size_t take = std::min(want[l], pool.size());
    out.insert(out.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take));
  }
  std::sort(out.begin(), out.end());
  return out;
}

BaseTrainResult fit_base(BaseWeights weights, Vocab vocab, const std::vector<Example>& data,
                         const TrainConfig& cfg) {
  TrainReport report = fit(weights, data, cfg,
                           [](const BaseWeights& w, const std::vector<Example>& batch, BaseWeights& grads,
                              double inv, Rng&) {
                             double loss = 0.0;
                             for (const auto& ex : batch) {
                               loss += example_backward<float>(w, nullptr, ex, &grads, nullptr, nullptr, inv);
                             }
                             return loss;
                           });
  return {std::move(weights), std::move(vocab), std::move(report)};
}

BaseTrainResult pretrain_base(const ParallelCorpus& corpus, ModelConfig model_cfg,
                              const TrainConfig& cfg, Rng& rng) {
  require(!corpus.samples.empty(), "pretrain_base: empty corpus");
  std::vector<std::string> texts;
  for (const auto& s : corpus.samples) {
    texts.push_back(s.prompt);
    texts.push_back(s.gold);
  }
  Vocab vocab = Vocab::build(texts);
  model_cfg.vocab_size = vocab.size();
  BaseWeights weights = init_weights(model_cfg, rng);
  std::vector<Example> data;
  for (std::size_t i : pretrain_mixture(corpus, rng)) {
    data.push_back(make_pretrain_example(corpus.samples[i], vocab));
  }
  return fit_base(std::move(weights), std::move(vocab), data, cfg);
}

}  // namespace t2c
