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

#include "t2c/lora.hpp"

#include <algorithm>

namespace t2c {

void validate_spec(const LoraSpec& spec, const ShapeMap& base_shapes) {
  if (spec.rank < 1) throw ConfigError("lora rank must be >= 1");
  if (!(spec.dropout >= 0.0 && spec.dropout < 1.0)) throw ConfigError("lora dropout must be in [0, 1)");
  if (spec.target_modules.empty()) throw ConfigError("lora spec has no target modules");
  for (const auto& t : spec.target_modules) {
    auto it = base_shapes.find(t);
    if (it == base_shapes.end()) throw ConfigError("unknown lora target '" + t + "'");
    const auto [d, k] = it->second;
    if (2 * spec.rank > std::min(d, k)) {
      throw ConfigError("lora rank " + std::to_string(spec.rank) + " is not small against target '" +
                        t + "' (" + std::to_string(d) + "x" + std::to_string(k) + ")");
    }
    if (std::count(spec.target_modules.begin(), spec.target_modules.end(), t) != 1) {
      throw ConfigError("lora target '" + t + "' listed twice");
    }
  }
}

LoraAdapter init_adapter(const LoraSpec& spec, const ShapeMap& base_shapes, Rng& rng) {
  validate_spec(spec, base_shapes);
  LoraAdapter out;
  out.spec = spec;
  for (const auto& t : spec.target_modules) {
    const auto [d, k] = base_shapes.at(t);
    LoraPair<float> p{t, Matrix(spec.rank, k), Matrix::Zero(d, spec.rank)};
    for (Index i = 0; i < p.a.size(); ++i) p.a.data()[i] = static_cast<float>(rng.normal(0.0, 0.02));
    out.pairs.push_back(std::move(p));
  }
  return out;
}

Matrix materialize_delta(const LoraAdapter& adapter, std::string_view target) {
  const auto* p = adapter.find(target);
  if (!p) throw ContractError("adapter has no target '" + std::string(target) + "'");
  const double scale = adapter.spec.scale();
  // Dense product in double, scaled, rounded once.
  Matrix out(p->b.rows(), p->a.cols());
  for (Index i = 0; i < out.rows(); ++i) {
    for (Index j = 0; j < out.cols(); ++j) {
      double acc = 0.0;
      for (Index r = 0; r < p->a.rows(); ++r) {
        acc += static_cast<double>(p->b(i, r)) * static_cast<double>(p->a(r, j));
      }
      out(i, j) = static_cast<float>(scale * acc);
    }
  }
  return out;
}

TensorContainer adapter_to_container(const LoraAdapter& adapter) {
  TensorContainer c;
  c.magic = "TLMA";
  c.meta = {{"rank", adapter.spec.rank},
            {"alpha", adapter.spec.alpha},
            {"dropout", adapter.spec.dropout},
            {"target_modules", adapter.spec.target_modules},
            {"language_tag", adapter.spec.language_tag}};
  for (const auto& p : adapter.pairs) {
    c.tensors.push_back({p.target + ".A", p.a});
    c.tensors.push_back({p.target + ".B", p.b});
  }
  return c;
}

LoraAdapter adapter_from_container(const TensorContainer& c) {
  LoraAdapter out;
  try {
    out.spec.rank = c.meta.at("rank").get<int>();
    out.spec.alpha = c.meta.at("alpha").get<double>();
    out.spec.dropout = c.meta.at("dropout").get<double>();
    out.spec.target_modules = c.meta.at("target_modules").get<std::vector<std::string>>();
    out.spec.language_tag = c.meta.at("language_tag").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("adapter manifest: bad spec field: ") + e.what());
  }
  if (out.spec.rank < 1) throw FormatError("adapter manifest: rank must be >= 1");
  if (c.tensors.size() != 2 * out.spec.target_modules.size()) {
    throw FormatError("adapter manifest lists " + std::to_string(c.tensors.size()) +
                      " tensors for " + std::to_string(out.spec.target_modules.size()) + " targets");
  }
  for (std::size_t i = 0; i < out.spec.target_modules.size(); ++i) {
    const auto& target = out.spec.target_modules[i];
    const auto& a = c.tensors[2 * i];
    const auto& b = c.tensors[2 * i + 1];
    if (a.name != target + ".A") throw FormatError("expected tensor '" + target + ".A', found '" + a.name + "'");
    if (b.name != target + ".B") throw FormatError("expected tensor '" + target + ".B', found '" + b.name + "'");
    if (a.value.rows() != out.spec.rank) {
      throw FormatError("tensor '" + a.name + "' has " + std::to_string(a.value.rows()) +
                        " rows but rank is " + std::to_string(out.spec.rank));
    }
    if (b.value.cols() != out.spec.rank) {
      throw FormatError("tensor '" + b.name + "' has " + std::to_string(b.value.cols()) +
                        " columns but rank is " + std::to_string(out.spec.rank));
    }
    out.pairs.push_back({target, a.value, b.value});
  }
  return out;
}

std::string encode_adapter(const LoraAdapter& adapter) {
  return encode_container(adapter_to_container(adapter));
}

void save_adapter(const LoraAdapter& adapter, const std::filesystem::path& path) {
  write_container(adapter_to_container(adapter), path);
}

LoraAdapter load_adapter(const std::filesystem::path& path) {
  return adapter_from_container(read_container(path, "TLMA"));
}

}  // namespace t2c
