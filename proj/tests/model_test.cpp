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

#include <cstring>
#include <filesystem>

#include "doctest.h"
#include "t2c/model.hpp"
#include "t2c/vocab.hpp"
#include "test_util.hpp"

using namespace t2c;
using namespace t2c::testing;

namespace {

bool bitwise_equal(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(float) * static_cast<std::size_t>(a.size())) == 0;
}

std::vector<int> ids_of(std::initializer_list<int> v) { return std::vector<int>(v); }

// Dense single-layer reference: materialized W0 + delta, plain loops.
Matrix dense_forward(const BaseWeights& w, const LoraAdapter& a, const std::vector<int>& ids) {
  const ModelConfig& c = w.config;
  const Index T = static_cast<Index>(ids.size()), H = c.hidden, dh = c.head_dim();
  auto weight = [&](const std::string& name, const Matrix& w0) {
    MatrixX<double> m = w0.cast<double>();
    if (a.find(name)) m += materialize_delta(a, name).transpose().cast<double>();
    return m;
  };
  auto ln = [&](const MatrixX<double>& x, const Matrix& g, const Matrix& b) {
    MatrixX<double> out(x.rows(), x.cols());
    for (Index t = 0; t < x.rows(); ++t) {
      const double mean = x.row(t).mean();
      const double var = (x.row(t).array() - mean).square().mean();
      for (Index i = 0; i < x.cols(); ++i) out(t, i) = (x(t, i) - mean) / std::sqrt(var + kNormEps) * g(0, i) + b(0, i);
    }
    return out;
  };
  MatrixX<double> x(T, H);
  for (Index t = 0; t < T; ++t) x.row(t) = (w.tok_emb.row(ids[t]) + w.pos_emb.row(t)).cast<double>();
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    const auto& L = w.layers[l];
    const std::string p = "layers." + std::to_string(l) + ".";
    const MatrixX<double> h = ln(x, L.ln1_gain, L.ln1_bias);
    const MatrixX<double> q = h * weight(p + "attn.q", L.wq), k = h * weight(p + "attn.k", L.wk),
                          v = h * weight(p + "attn.v", L.wv);
    MatrixX<double> ctx = MatrixX<double>::Zero(T, H);
    for (Index hd = 0; hd < c.heads; ++hd) {
      for (Index t = 0; t < T; ++t) {
        std::vector<double> s(static_cast<std::size_t>(t + 1));
        double mx = -1e300;
        for (Index u = 0; u <= t; ++u) {
          s[u] = q.row(t).segment(hd * dh, dh).dot(k.row(u).segment(hd * dh, dh)) / std::sqrt(double(dh));
          mx = std::max(mx, s[u]);
        }
        double z = 0.0;
        for (auto& e : s) z += (e = std::exp(e - mx));
        for (Index u = 0; u <= t; ++u) ctx.row(t).segment(hd * dh, dh) += s[u] / z * v.row(u).segment(hd * dh, dh);
      }
    }
    x += ctx * weight(p + "attn.o", L.wo);
    const MatrixX<double> h2 = ln(x, L.ln2_gain, L.ln2_bias);
    MatrixX<double> up = h2 * weight(p + "ffn.up", L.w_up);
    for (Index t = 0; t < T; ++t) up.row(t) += L.b_up.cast<double>();
    for (Index i = 0; i < up.size(); ++i) {
      const double u = up.data()[i];
      up.data()[i] = 0.5 * u * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (u + 0.044715 * u * u * u)));
    }
    MatrixX<double> down = up * weight(p + "ffn.down", L.w_down);
    for (Index t = 0; t < T; ++t) down.row(t) += L.b_down.cast<double>();
    x += down;
  }
  return (ln(x, w.final_gain, w.final_bias) * w.head.cast<double>()).cast<float>();
}

}  // namespace

TEST_CASE("tokenize and detokenize") {
  const Vocab v = Vocab::build({"MATCH ( a )", "b a"});
  CHECK(tokenize("", v) == std::vector<int>{Vocab::kBos});
  CHECK(tokenize("MATCH ( a )", v) == std::vector<int>{1, v.id("MATCH"), v.id("("), v.id("a"), v.id(")")});
  CHECK(tokenize("zzz", v) == std::vector<int>{1, Vocab::kUnk});
  CHECK(detokenize(tokenize("  MATCH   ( a )", v), v) == "MATCH ( a )");
  CHECK(v.token(0) == "<pad>");
  CHECK_THROWS(Vocab(std::vector<std::string>{"a", "b"}));
}

TEST_CASE("config validation") {
  ModelConfig c = micro_config();
  CHECK_NOTHROW(c.validate());
  c.hidden = 9;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = micro_config();
  c.max_seq = 100;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = micro_config();
  c.vocab_size = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(model_config_from_json(to_json(micro_config())) == micro_config());
  nlohmann::json j = to_json(micro_config());
  j["extra"] = 1;
  CHECK_THROWS_AS(model_config_from_json(j), ConfigError);
}

TEST_CASE("zero delta adapters leave logits bitwise unchanged") {
  const ModelConfig cfg = micro_config(16, 8, 2);
  const BaseWeights w = random_weights(cfg, 1);
  const std::vector<int> ids = ids_of({1, 5, 9, 4, 12, 7});
  const ForwardOutput base = forward<float>(w, nullptr, ids);
  LoraSpec spec;
  spec.rank = 2;
  spec.alpha = 4;
  for (const auto& [name, shape] : lora_target_shapes(cfg)) spec.target_modules.push_back(name);
  Rng rng(2);
  const LoraAdapter fresh = init_adapter(spec, lora_target_shapes(cfg), rng);
  CHECK(bitwise_equal(forward(w, &fresh, ids).logits, base.logits));
  LoraAdapter a_zero = random_adapter(cfg, spec.target_modules, 2, 3);
  for (auto& p : a_zero.pairs) p.a.setZero();
  CHECK(bitwise_equal(forward(w, &a_zero, ids).logits, base.logits));
  LoraAdapter scaled = random_adapter(cfg, spec.target_modules, 2, 4);
  scaled.spec.alpha = 0.0;
  CHECK(bitwise_equal(forward(w, &scaled, ids).logits, base.logits));
}

TEST_CASE("adapter forward matches a dense materialized oracle") {
  ModelConfig cfg = micro_config(16, 4, 1);
  cfg.heads = 2;
  cfg.ffn_dim = 8;
  const BaseWeights w = random_weights(cfg, 5);
  LoraAdapter a = random_adapter(cfg, {"layers.0.attn.q", "layers.0.attn.v", "layers.0.ffn.up"}, 1, 6, 0.2);
  const std::vector<int> ids = ids_of({1, 3, 8, 8, 15, 2, 6});
  const Matrix got = forward(w, &a, ids).logits;
  const Matrix want = dense_forward(w, a, ids);
  CHECK((got - want).cwiseAbs().maxCoeff() <= 1e-5);
  LoraAdapter none = a;
  none.pairs.clear();
  none.spec.target_modules.clear();
  CHECK((forward<float>(w, nullptr, ids).logits - dense_forward(w, none, ids)).cwiseAbs().maxCoeff() <= 1e-5);
}

TEST_CASE("causality and incremental decoding") {
  const ModelConfig cfg = micro_config(16, 8, 2);
  const BaseWeights w = random_weights(cfg, 7);
  const LoraAdapter a = random_adapter(cfg, default_lora_targets(cfg), 2, 8);
  std::vector<int> ids = ids_of({1, 4, 5, 6, 7, 8, 9, 10});
  const Matrix full = forward(w, &a, ids).logits;
  std::vector<int> changed = ids;
  changed[5] = 13;
  const Matrix other = forward(w, &a, changed).logits;
  CHECK(bitwise_equal(full.topRows(5), other.topRows(5)));
  CHECK(!bitwise_equal(full.row(5), other.row(5)));

  DecodeSession<float> session(w, &a);
  Matrix inc(0, cfg.vocab_size);
  const std::vector<std::vector<int>> chunks = {{1, 4, 5}, {6}, {7, 8, 9}, {10}};
  for (const auto& c : chunks) {
    const Matrix part = session.extend(c).logits;
    Matrix grown(inc.rows() + part.rows(), inc.cols());
    grown << inc, part;
    inc = grown;
  }
  CHECK(session.length() == 8);
  CHECK(bitwise_equal(inc, full));
}

TEST_CASE("forward contract errors") {
  const ModelConfig cfg = micro_config(16, 8, 1);
  const BaseWeights w = random_weights(cfg, 9);
  CHECK_THROWS_AS(forward<float>(w, nullptr, std::vector<int>{}), ContractError);
  CHECK_THROWS_AS(forward<float>(w, nullptr, std::vector<int>{1, 16}), ContractError);
  CHECK_THROWS_AS(forward<float>(w, nullptr, std::vector<int>(201, 4)), ContractError);
  LoraAdapter bad = random_adapter(cfg, {"layers.0.attn.q"}, 2, 1);
  bad.pairs[0].target = "layers.3.attn.q";
  bad.spec.target_modules = {"layers.3.attn.q"};
  CHECK_THROWS_AS(forward(w, &bad, std::vector<int>{1, 2}), ContractError);
}

TEST_CASE("greedy decoding") {
  const ModelConfig cfg = micro_config(16, 8, 1);
  BaseWeights w = random_weights(cfg, 10);
  const std::vector<int> prompt = ids_of({1, 5, 6});
  CHECK(greedy_decode(w, nullptr, prompt, 0).empty());
  const std::vector<int> free_run = greedy_decode(w, nullptr, prompt, 6);
  CHECK(free_run.size() <= 6);
  CHECK(greedy_decode(w, nullptr, prompt, 6) == free_run);
  CHECK_THROWS_AS(greedy_decode(w, nullptr, prompt, 198), ContractError);
  w.head.setZero();
  w.head.col(Vocab::kEos).setConstant(1.0f);
  w.final_gain.setZero();
  w.final_bias.setOnes();
  CHECK(greedy_decode(w, nullptr, prompt, 10) == std::vector<int>{Vocab::kEos});
  // All-equal logits: the lowest id wins.
  w.head.setZero();
  CHECK(greedy_decode(w, nullptr, prompt, 2) == std::vector<int>{0, 0});
  const float row[4] = {1.0f, 3.0f, 3.0f, 2.0f};
  CHECK(argmax(row, 4) == 1);
}

TEST_CASE("base weights round-trip through TLMW") {
  const ModelConfig cfg = micro_config(6, 8, 2);
  const BaseWeights w = random_weights(cfg, 11);
  const Vocab v({"<pad>", "<bos>", "<eos>", "<unk>", "x", "y"});
  const std::string bytes = encode_base(w, v);
  const LoadedBase back = decode_base(decode_container(bytes, "TLMW"));
  CHECK(back.weights.config == cfg);
  CHECK(back.vocab.tokens() == v.tokens());
  CHECK(encode_base(back.weights, back.vocab) == bytes);
  TensorContainer c = decode_container(bytes, "TLMW");
  c.tensors.pop_back();
  CHECK_THROWS_AS(decode_base(c), FormatError);
}
