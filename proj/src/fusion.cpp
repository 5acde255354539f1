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

#include "t2c/fusion.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

namespace t2c {

template <typename S>
VectorX<S> BasicGateFeatures<S>::concat() const {
  Index total = base_pooled.size();
  for (const auto& p : previews) total += p.size();
  VectorX<S> out(total);
  out.head(base_pooled.size()) = base_pooled;
  Index off = base_pooled.size();
  for (const auto& p : previews) {
    out.segment(off, p.size()) = p;
    off += p.size();
  }
  return out;
}

template struct BasicGateFeatures<float>;
template struct BasicGateFeatures<double>;

GateNetwork init_gate(int n, int hidden_size, int vocab_size, std::vector<std::string> adapter_order,
                      Rng& rng, int width) {
  require(n >= 1, "gate needs at least one adapter");
  require(hidden_size >= 1 && vocab_size >= 1 && width >= 1, "gate dimensions must be positive");
  require(static_cast<int>(adapter_order.size()) == n, "gate adapter order must list n adapters");
  GateNetwork net;
  net.n = n;
  net.hidden_size = hidden_size;
  net.vocab_size = vocab_size;
  net.width = width;
  net.adapter_order = std::move(adapter_order);
  const Index in = net.input_dim();
  net.w1.resize(in, width);
  const double sd = 1.0 / std::sqrt(static_cast<double>(in));
  for (Index i = 0; i < net.w1.size(); ++i) net.w1.data()[i] = static_cast<float>(rng.normal(0.0, sd));
  net.in_shift = Matrix::Zero(1, in);
  net.in_scale = Matrix::Ones(1, in);
  net.b1 = Matrix::Zero(1, width);
  net.w2 = Matrix::Zero(width, n);
  net.b2 = Matrix::Zero(1, n);
  return net;
}

namespace {

template <typename S>
struct GateActivations {
  MatrixX<S> x;    // 1 x input_dim, standardized
  MatrixX<S> pre;  // 1 x width
  MatrixX<S> h;    // 1 x width
  VectorX<S> w;    // n
};

template <typename S>
GateActivations<S> gate_forward(const BasicGateNetwork<S>& net, const VectorX<S>& x) {
  if (x.size() != net.input_dim()) {
    throw ContractError("gate: feature length " + std::to_string(x.size()) + " does not match input dim " +
                        std::to_string(net.input_dim()));
  }
  GateActivations<S> a;
  a.x = MatrixX<S>(1, x.size());
  for (Index i = 0; i < x.size(); ++i) a.x(0, i) = (x[i] - net.in_shift(0, i)) * net.in_scale(0, i);
  a.pre = matmul(a.x, net.w1);
  a.pre += net.b1;
  a.h = a.pre.cwiseMax(S(0));
  MatrixX<S> z = matmul(a.h, net.w2);
  z += net.b2;
  a.w = VectorX<S>(net.n);
  for (int i = 0; i < net.n; ++i) a.w[i] = z(0, i);
  softmax_inplace(a.w.data(), a.w.size());
  return a;
}

template <typename S>
MatrixX<S> fuse(const std::vector<const MatrixX<S>*>& logits, const VectorX<S>& w) {
  require(!logits.empty() && static_cast<Index>(logits.size()) == w.size(),
          "fuse: one weight per logit matrix required");
  const Index rows = logits[0]->rows(), cols = logits[0]->cols();
  for (const auto* m : logits) require(m->rows() == rows && m->cols() == cols, "fuse: logit shapes differ");
  MatrixX<S> out(rows, cols);
  for (Index i = 0; i < out.size(); ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
      acc += static_cast<double>(w[static_cast<Index>(k)]) * static_cast<double>(logits[k]->data()[i]);
    }
    out.data()[i] = static_cast<S>(acc);
  }
  return out;
}

}  // namespace

template <typename S>
VectorX<S> gate(const BasicGateNetwork<S>& net, const BasicGateFeatures<S>& feats) {
  if (static_cast<int>(feats.previews.size()) != net.n) {
    throw ContractError("gate: " + std::to_string(feats.previews.size()) + " previews for " +
                        std::to_string(net.n) + " adapters");
  }
  if (feats.base_pooled.size() != net.hidden_size) throw ContractError("gate: base_pooled length mismatch");
  for (const auto& p : feats.previews) {
    if (p.size() != net.vocab_size) throw ContractError("gate: preview length mismatch");
  }
  return gate_forward(net, feats.concat()).w;
}

template VectorX<float> gate(const BasicGateNetwork<float>&, const BasicGateFeatures<float>&);
template VectorX<double> gate(const BasicGateNetwork<double>&, const BasicGateFeatures<double>&);

GateFeatures pool_features(const Matrix& base_hidden, std::span<const int> prompt_ids,
                           const std::vector<const Matrix*>& adapter_logits) {
  const Index T = static_cast<Index>(prompt_ids.size());
  require(T > 0, "preview_features: empty prompt");
  require(base_hidden.rows() >= T, "preview_features: base hidden rows shorter than prompt");
  std::vector<bool> mask(static_cast<std::size_t>(T));
  for (Index t = 0; t < T; ++t) mask[static_cast<std::size_t>(t)] = prompt_ids[static_cast<std::size_t>(t)] != Vocab::kPad;
  GateFeatures f;
  f.base_pooled = mean_rows(base_hidden.topRows(T), mask);
  const Index window = std::min<Index>(kPreviewWindow, T);
  for (const Matrix* logits : adapter_logits) {
    require(logits->rows() >= T, "preview_features: adapter logits shorter than prompt");
    f.previews.push_back(mean_rows(logits->middleRows(T - window, window)));
  }
  return f;
}

GateFeatures preview_features(const BaseWeights& base, const std::vector<LoraAdapter>& adapters,
                              std::span<const int> prompt_ids) {
  require(!prompt_ids.empty(), "preview_features: empty prompt");
  const ForwardOutput b = forward(base, static_cast<const LoraAdapter*>(nullptr), prompt_ids);
  std::vector<Matrix> logits;
  for (const auto& a : adapters) logits.push_back(forward(base, &a, prompt_ids).logits);
  std::vector<const Matrix*> ptrs;
  for (const auto& l : logits) ptrs.push_back(&l);
  return pool_features(b.final_hidden, prompt_ids, ptrs);
}

Vector gate_weights(const FusedModel& model, std::span<const int> prompt_ids) {
  require(model.base != nullptr, "fused model has no base");
  return gate(model.gate, preview_features(*model.base, model.adapters, prompt_ids));
}

Matrix fuse_logits(const std::vector<const Matrix*>& logits, const Vector& w) { return fuse(logits, w); }

Matrix fused_forward(const FusedModel& model, std::span<const int> ids, std::size_t prompt_len) {
  require(model.base != nullptr, "fused model has no base");
  require(!ids.empty(), "fused_forward: empty input");
  if (prompt_len == 0) prompt_len = ids.size();
  require(prompt_len <= ids.size(), "fused_forward: prompt longer than input");
  const Vector w = gate_weights(model, ids.first(prompt_len));
  std::vector<Matrix> logits;
  for (const auto& a : model.adapters) logits.push_back(forward(*model.base, &a, ids).logits);
  std::vector<const Matrix*> ptrs;
  for (const auto& l : logits) ptrs.push_back(&l);
  return fuse(ptrs, w);
}

std::vector<int> fused_decode(const FusedModel& model, std::span<const int> prompt_ids, int max_new,
                              Vector* weights_out) {
  require(model.base != nullptr, "fused model has no base");
  require(!model.adapters.empty(), "fused model has no adapters");
  require(!prompt_ids.empty(), "fused_decode: empty prompt");
  require(max_new >= 0, "fused_decode: negative max_new");
  const BaseWeights& base = *model.base;
  require(static_cast<Index>(prompt_ids.size()) + max_new <= base.config.max_seq,
          "fused_decode: prompt plus generation exceeds max_seq");

  std::vector<DecodeSession<float>> sessions;
  std::vector<Matrix> rows;
  for (const auto& a : model.adapters) {
    sessions.emplace_back(base, &a);
    rows.push_back(sessions.back().extend(prompt_ids).logits);
  }
  const ForwardOutput b = forward(base, static_cast<const LoraAdapter*>(nullptr), prompt_ids);
  std::vector<const Matrix*> ptrs;
  for (const auto& r : rows) ptrs.push_back(&r);
  const Vector w = gate(model.gate, pool_features(b.final_hidden, prompt_ids, ptrs));
  if (weights_out) *weights_out = w;

  std::vector<int> out;
  if (max_new == 0) return out;
  std::vector<Matrix> last(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) last[i] = rows[i].bottomRows(1);
  while (true) {
    std::vector<const Matrix*> lp;
    for (const auto& r : last) lp.push_back(&r);
    const Matrix fused = fuse(lp, w);
    const int tok = argmax(fused.data(), fused.cols());
    out.push_back(tok);
    if (tok == Vocab::kEos || static_cast<int>(out.size()) == max_new) break;
    const int next[1] = {tok};
    for (std::size_t i = 0; i < sessions.size(); ++i) last[i] = sessions[i].extend(next).logits;
  }
  return out;
}

std::vector<int> fused_decode(const FusedModel& model, std::span<const int> prompt_ids, int max_new) {
  return fused_decode(model, prompt_ids, max_new, nullptr);
}

int route(const FusedModel& model, std::span<const int> prompt_ids) {
  const Vector w = gate_weights(model, prompt_ids);
  return argmax(w.data(), w.size());
}

GateExample<float> make_gate_example(const BaseWeights& base, const std::vector<LoraAdapter>& adapters,
                                     const Example& ex) {
  require(ex.target_start >= 1 && ex.target_start < ex.ids.size(), "gate example has no targets");
  const std::span<const int> ids(ex.ids);
  const std::span<const int> prompt = ids.first(ex.target_start);
  const Index first = static_cast<Index>(ex.target_start) - 1;
  const Index count = static_cast<Index>(ex.target_count());
  const ForwardOutput b = forward(base, static_cast<const LoraAdapter*>(nullptr), prompt);
  GateExample<float> g;
  std::vector<Matrix> full;
  for (const auto& a : adapters) full.push_back(forward(base, &a, ids).logits);
  std::vector<const Matrix*> ptrs;
  for (const auto& l : full) ptrs.push_back(&l);
  g.features = pool_features(b.final_hidden, prompt, ptrs).concat();
  for (const auto& l : full) g.logits.push_back(l.middleRows(first, count));
  g.targets.assign(ex.ids.begin() + static_cast<std::ptrdiff_t>(ex.target_start), ex.ids.end());
  return g;
}

template <typename S>
double gate_loss_and_grads(const BasicGateNetwork<S>& net, std::span<const GateExample<S>> batch,
                           BasicGateNetwork<S>* grads) {
  require(!batch.empty(), "gate_loss_and_grads: empty batch");
  std::size_t tokens = 0;
  for (const auto& ex : batch) tokens += ex.targets.size();
  require(tokens > 0, "gate_loss_and_grads: batch has no targets");
  const double inv = 1.0 / static_cast<double>(tokens);
  if (grads) *grads = net.zeros_like();
  double loss = 0.0;
  for (const auto& ex : batch) {
    require(static_cast<int>(ex.logits.size()) == net.n, "gate example has the wrong adapter count");
    const GateActivations<S> a = gate_forward(net, ex.features);
    std::vector<const MatrixX<S>*> ptrs;
    for (const auto& l : ex.logits) ptrs.push_back(&l);
    const MatrixX<S> fused = fuse(ptrs, a.w);
    const Index V = fused.cols();
    require(fused.rows() == static_cast<Index>(ex.targets.size()), "gate example rows do not match targets");
    MatrixX<double> dfused(fused.rows(), V);
    for (Index t = 0; t < fused.rows(); ++t) {
      const int target = ex.targets[static_cast<std::size_t>(t)];
      double mx = static_cast<double>(fused(t, 0));
      for (Index j = 1; j < V; ++j) mx = std::max(mx, static_cast<double>(fused(t, j)));
      double total = 0.0;
      for (Index j = 0; j < V; ++j) total += std::exp(static_cast<double>(fused(t, j)) - mx);
      loss += std::log(total) + mx - static_cast<double>(fused(t, target));
      for (Index j = 0; j < V; ++j) {
        const double p = std::exp(static_cast<double>(fused(t, j)) - mx) / total;
        dfused(t, j) = (p - (j == target ? 1.0 : 0.0)) * inv;
      }
    }
    if (!grads) continue;
    std::vector<double> dw(static_cast<std::size_t>(net.n), 0.0);
    for (int i = 0; i < net.n; ++i) {
      double acc = 0.0;
      const MatrixX<S>& L = ex.logits[static_cast<std::size_t>(i)];
      for (Index k = 0; k < L.size(); ++k) acc += dfused.data()[k] * static_cast<double>(L.data()[k]);
      dw[static_cast<std::size_t>(i)] = acc;
    }
    double wdw = 0.0;
    for (int i = 0; i < net.n; ++i) wdw += static_cast<double>(a.w[i]) * dw[static_cast<std::size_t>(i)];
    std::vector<double> dz(static_cast<std::size_t>(net.n));
    for (int i = 0; i < net.n; ++i) dz[static_cast<std::size_t>(i)] = static_cast<double>(a.w[i]) * (dw[static_cast<std::size_t>(i)] - wdw);
    for (int i = 0; i < net.n; ++i) grads->b2(0, i) += static_cast<S>(dz[static_cast<std::size_t>(i)]);
    std::vector<double> dh(static_cast<std::size_t>(net.width), 0.0);
    for (int u = 0; u < net.width; ++u) {
      const double hu = static_cast<double>(a.h(0, u));
      double acc = 0.0;
      for (int i = 0; i < net.n; ++i) {
        grads->w2(u, i) += static_cast<S>(hu * dz[static_cast<std::size_t>(i)]);
        acc += static_cast<double>(net.w2(u, i)) * dz[static_cast<std::size_t>(i)];
      }
      dh[static_cast<std::size_t>(u)] = a.pre(0, u) > S(0) ? acc : 0.0;
      grads->b1(0, u) += static_cast<S>(dh[static_cast<std::size_t>(u)]);
    }
    for (Index r = 0; r < a.x.cols(); ++r) {
      const double xr = static_cast<double>(a.x(0, r));
      if (xr == 0.0) continue;
      S* row = grads->w1.row(r).data();
      for (int u = 0; u < net.width; ++u) row[u] += static_cast<S>(xr * dh[static_cast<std::size_t>(u)]);
    }
  }
  return loss * inv;
}

template double gate_loss_and_grads(const BasicGateNetwork<float>&, std::span<const GateExample<float>>,
                                    BasicGateNetwork<float>*);
template double gate_loss_and_grads(const BasicGateNetwork<double>&, std::span<const GateExample<double>>,
                                    BasicGateNetwork<double>*);

namespace {

// Per-feature mean and 1 / sqrt(var + eps) over the training features.
void standardize_inputs(GateNetwork& net, const std::vector<GateExample<float>>& data) {
  constexpr double kVarEps = 1e-2;
  const Index in = net.input_dim();
  std::vector<double> mean(static_cast<std::size_t>(in), 0.0), var(static_cast<std::size_t>(in), 0.0);
  for (const auto& ex : data) {
    require(ex.features.size() == in, "gate example has the wrong feature length");
    for (Index i = 0; i < in; ++i) mean[static_cast<std::size_t>(i)] += static_cast<double>(ex.features[i]);
  }
  const double count = static_cast<double>(data.size());
  for (auto& m : mean) m /= count;
  for (const auto& ex : data) {
    for (Index i = 0; i < in; ++i) {
      const double d = static_cast<double>(ex.features[i]) - mean[static_cast<std::size_t>(i)];
      var[static_cast<std::size_t>(i)] += d * d;
    }
  }
  net.in_shift.resize(1, in);
  net.in_scale.resize(1, in);
  for (Index i = 0; i < in; ++i) {
    net.in_shift(0, i) = static_cast<float>(mean[static_cast<std::size_t>(i)]);
    net.in_scale(0, i) = static_cast<float>(1.0 / std::sqrt(var[static_cast<std::size_t>(i)] / count + kVarEps));
  }
}

}  // namespace

GateTrainResult train_gate(const FusedModel& model, const std::vector<Sample>& subset, const Vocab& vocab,
                           const TrainConfig& cfg, Rng& rng) {
  require(!subset.empty(), "train_gate: empty subset");
  require(model.base != nullptr, "fused model has no base");
  require(static_cast<int>(model.adapters.size()) == model.gate.n, "gate size does not match adapters");
  cfg.validate();
  const auto t_start = std::chrono::steady_clock::now();
  const std::string base_before = encode_base(*model.base, vocab);
  std::vector<std::string> adapters_before;
  for (const auto& a : model.adapters) adapters_before.push_back(encode_adapter(a));

  std::vector<GateExample<float>> data;
  data.reserve(subset.size());
  for (const auto& s : subset) data.push_back(make_gate_example(*model.base, model.adapters, make_example(s, vocab)));

  GateNetwork net = model.gate;
  standardize_inputs(net, data);
  GateNetwork grads = net.zeros_like();
  std::vector<Matrix*> params, gparams;
  net.for_each([&](const std::string&, Matrix& m) { params.push_back(&m); });
  grads.for_each([&](const std::string&, Matrix& m) { gparams.push_back(&m); });
  std::vector<const Matrix*> gconst(gparams.begin(), gparams.end());
  AdamW opt(params, {true, false, true, false});

  const std::size_t n = data.size();
  const std::size_t eff = static_cast<std::size_t>(cfg.effective_batch());
  const int total = static_cast<int>((n + eff - 1) / eff) * cfg.epochs;
  TrainReport report;
  report.instance_count = static_cast<std::int64_t>(n) * cfg.epochs;
  int step = 0;
  std::vector<GateExample<float>> batch;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    for (std::size_t start = 0; start < n; start += eff) {
      batch.clear();
      for (std::size_t i = start; i < std::min(n, start + eff); ++i) batch.push_back(data[order[i]]);
      const double loss = gate_loss_and_grads<float>(net, batch, &grads);
      if (!std::isfinite(loss)) throw TrainingError("non-finite gate loss at batch " + std::to_string(step));
      clip_global_norm(gparams, cfg.clip_norm);
      opt.step(gconst, lr_at(cfg, step, total), cfg.weight_decay);
      report.step_losses.push_back(loss);
      ++step;
    }
  }
  report.steps = step;
  if (!report.step_losses.empty()) {
    report.initial_loss = report.step_losses.front();
    const std::size_t k = std::min<std::size_t>(10, report.step_losses.size());
    report.final_loss = std::accumulate(report.step_losses.end() - static_cast<std::ptrdiff_t>(k),
                                        report.step_losses.end(), 0.0) / static_cast<double>(k);
  }
  if (encode_base(*model.base, vocab) != base_before) throw TrainingError("base weights changed during gate training");
  for (std::size_t i = 0; i < model.adapters.size(); ++i) {
    if (encode_adapter(model.adapters[i]) != adapters_before[i]) {
      throw TrainingError("adapter " + model.adapters[i].spec.language_tag + " changed during gate training");
    }
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return {std::move(net), std::move(report)};
}

std::string encode_gate(const GateNetwork& net) {
  TensorContainer c;
  c.magic = "TLMG";
  c.meta = {{"n", net.n},
            {"hidden_size", net.hidden_size},
            {"vocab_size", net.vocab_size},
            {"width", net.width},
            {"adapter_order", net.adapter_order}};
  c.tensors.push_back({"in_shift", net.in_shift});
  c.tensors.push_back({"in_scale", net.in_scale});
  net.for_each([&](const std::string& name, const Matrix& m) { c.tensors.push_back({name, m}); });
  return encode_container(c);
}

void save_gate(const GateNetwork& net, const std::filesystem::path& path) { write_file(path, encode_gate(net)); }

GateNetwork decode_gate(const TensorContainer& container) {
  GateNetwork net;
  try {
    net.n = container.meta.at("n").get<int>();
    net.hidden_size = container.meta.at("hidden_size").get<int>();
    net.vocab_size = container.meta.at("vocab_size").get<int>();
    net.width = container.meta.at("width").get<int>();
    net.adapter_order = container.meta.at("adapter_order").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("gate manifest: ") + e.what());
  }
  if (net.n < 1 || net.hidden_size < 1 || net.vocab_size < 1 || net.width < 1) {
    throw FormatError("gate manifest has non-positive dimensions");
  }
  if (static_cast<int>(net.adapter_order.size()) != net.n) {
    throw FormatError("gate adapter order lists " + std::to_string(net.adapter_order.size()) +
                      " adapters, expected " + std::to_string(net.n));
  }
  if (container.tensors.size() != 6) throw FormatError("gate container must hold 6 tensors");
  const std::pair<Index, Index> shapes[6] = {{1, net.input_dim()}, {1, net.input_dim()},
                                             {net.input_dim(), net.width}, {1, net.width},
                                             {net.width, net.n}, {1, net.n}};
  int k = 0;
  auto read = [&](const std::string& name, Matrix& m) {
    const NamedTensor& t = container.tensors[static_cast<std::size_t>(k)];
    if (t.name != name) throw FormatError("gate tensor " + std::to_string(k) + " is '" + t.name + "', expected '" + name + "'");
    if (t.value.rows() != shapes[k].first || t.value.cols() != shapes[k].second) {
      throw FormatError("gate tensor '" + name + "' has the wrong shape");
    }
    m = t.value;
    ++k;
  };
  read("in_shift", net.in_shift);
  read("in_scale", net.in_scale);
  net.for_each(read);
  return net;
}

GateNetwork load_gate(const std::filesystem::path& path) { return decode_gate(read_container(path, "TLMG")); }

}  // namespace t2c
