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

// Binary tensor container used for base weights (TLMW), adapters (TLMA) and
// gate networks (TLMG):
//
//   magic      4 bytes, e.g. "TLMW"
//   version    u32 little-endian
//   length     u64 little-endian, byte length of the manifest
//   manifest   UTF-8 JSON: {"tensors": [{"name", "rows", "cols"}, ...], "meta": {...}}
//   payload    row-major little-endian f32 data of each tensor, in manifest order
//
// Nothing may follow the last tensor.

#ifndef T2C_CONTAINER_HPP_
#define T2C_CONTAINER_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "t2c/numerics.hpp"

namespace t2c {

inline constexpr std::uint32_t kContainerVersion = 1;

struct NamedTensor {
  std::string name;
  Matrix value;
};

struct TensorContainer {
  std::string magic;
  std::uint32_t version = kContainerVersion;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  const Matrix& tensor(const std::string& name) const;
};

std::string encode_container(const TensorContainer& container);
TensorContainer decode_container(std::string_view bytes, std::string_view expected_magic);

void write_container(const TensorContainer& container, const std::filesystem::path& path);
TensorContainer read_container(const std::filesystem::path& path, std::string_view expected_magic);

// Whole-file helpers shared by the CLI and the report writers.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace t2c

#endif  // T2C_CONTAINER_HPP_
