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
#include "t2c/lora.hpp"
#include "t2c/model.hpp"
#include "test_util.hpp"

using namespace t2c;
using namespace t2c::testing;

TEST_CASE("init gives Gaussian A, zero B and the documented shapes") {
  ModelConfig cfg = micro_config(16, 64, 2);
  cfg.heads = 4;
  LoraSpec spec;
  spec.rank = 8;
  spec.alpha = 16;
  spec.target_modules = default_lora_targets(cfg);
  Rng r1(5), r2(5);
  const LoraAdapter a = init_adapter(spec, lora_target_shapes(cfg), r1);
  const LoraAdapter b = init_adapter(spec, lora_target_shapes(cfg), r2);
  CHECK(encode_adapter(a) == encode_adapter(b));
  REQUIRE(a.pairs.size() == 8);
  for (const auto& p : a.pairs) {
    CHECK(p.a.rows() == 8);
    CHECK(p.a.cols() == 64);
    CHECK(p.b.rows() == 64);
    CHECK(p.b.cols() == 8);
    CHECK(p.b.isZero(0.0f));
    const double sd = std::sqrt(p.a.cast<double>().squaredNorm() / static_cast<double>(p.a.size()));
    CHECK(sd == doctest::Approx(0.02).epsilon(0.15));
  }
}

TEST_CASE("spec validation") {
  const ShapeMap shapes = lora_target_shapes(micro_config());
  LoraSpec s;
  s.rank = 2;
  s.target_modules = {"layers.0.attn.q"};
  CHECK_NOTHROW(validate_spec(s, shapes));
  s.target_modules = {"layers.9.attn.q"};
  CHECK_THROWS_AS(validate_spec(s, shapes), ConfigError);
  s.target_modules = {"layers.0.attn.q", "layers.0.attn.q"};
  CHECK_THROWS_AS(validate_spec(s, shapes), ConfigError);
  s.target_modules = {"layers.0.attn.q"};
  s.rank = 0;
  CHECK_THROWS_AS(validate_spec(s, shapes), ConfigError);
  s.rank = 2;
  s.dropout = 1.0;
  CHECK_THROWS_AS(validate_spec(s, shapes), ConfigError);
  Rng rng(1);
  s.dropout = 0.0;
  s.target_modules = {"nope"};
  CHECK_THROWS_AS(init_adapter(s, shapes, rng), ConfigError);
}

TEST_CASE("materialize_delta") {
  const ModelConfig cfg = micro_config();
  LoraSpec spec;
  spec.rank = 1;
  spec.alpha = 3.0;
  spec.target_modules = {"layers.0.attn.q"};
  Rng rng(2);
  LoraAdapter a = init_adapter(spec, lora_target_shapes(cfg), rng);
  CHECK(materialize_delta(a, "layers.0.attn.q").isZero(0.0f));
  a.pairs[0].a.setZero();
  a.pairs[0].a(0, 0) = 1.0f;
  a.pairs[0].b(0, 0) = 1.0f;
  const Matrix d = materialize_delta(a, "layers.0.attn.q");
  CHECK(d(0, 0) == 3.0f);
  CHECK(d.cwiseAbs().sum() == 3.0f);
  CHECK_THROWS_AS(materialize_delta(a, "layers.1.attn.q"), ContractError);

  const LoraAdapter r = random_adapter(cfg, {"layers.1.attn.v"}, 2, 3);
  const Matrix got = materialize_delta(r, "layers.1.attn.v");
  const auto& p = r.pairs[0];
  for (Index i = 0; i < got.rows(); ++i)
    for (Index j = 0; j < got.cols(); ++j) {
      double s = 0.0;
      for (Index k = 0; k < 2; ++k) s += static_cast<double>(p.b(i, k)) * p.a(k, j);
      CHECK(std::abs(got(i, j) - r.spec.scale() * s) <= 1e-6);
    }
  LoraAdapter doubled = r;
  doubled.spec.alpha *= 2;
  CHECK(materialize_delta(doubled, "layers.1.attn.v") == Matrix(2.0f * got));
}

TEST_CASE("adapter serialization") {
  const ModelConfig cfg = micro_config();
  const LoraAdapter a = random_adapter(cfg, default_lora_targets(cfg), 2, 4);
  const auto dir = std::filesystem::temp_directory_path() / "t2c_lora_test";
  std::filesystem::create_directories(dir);
  save_adapter(a, dir / "a.tlma");
  const LoraAdapter b = load_adapter(dir / "a.tlma");
  CHECK(b.spec == a.spec);
  REQUIRE(b.pairs.size() == a.pairs.size());
  for (std::size_t i = 0; i < a.pairs.size(); ++i) {
    CHECK(b.pairs[i].target == a.pairs[i].target);
    CHECK(b.pairs[i].a == a.pairs[i].a);
    CHECK(b.pairs[i].b == a.pairs[i].b);
  }
  const std::string bytes = encode_adapter(a);
  CHECK_THROWS_AS(adapter_from_container(decode_container(bytes.substr(0, bytes.size() / 2), "TLMA")), FormatError);

  // Manifest says rank 4 while the payload holds rank-2 factors.
  TensorContainer c = adapter_to_container(a);
  c.meta["rank"] = 4;
  try {
    adapter_from_container(c);
    FAIL("no error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("layers.0.attn.q.A") != std::string::npos);
  }
  std::filesystem::remove_all(dir);
}
