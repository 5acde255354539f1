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

#include "t2c/container.hpp"

#include <bit>
#include <fstream>
#include <sstream>

namespace t2c {
namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view take(std::size_t n, const std::string& what) {
    if (bytes_.size() - pos_ < n) {
      throw FormatError("truncated container: " + what + " needs " + std::to_string(n) +
                        " bytes at offset " + std::to_string(pos_) + ", only " +
                        std::to_string(bytes_.size() - pos_) + " remain");
    }
    std::string_view out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::uint64_t le(std::size_t width, const std::string& what) {
    std::string_view b = take(width, what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    }
    return v;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const Matrix& TensorContainer::tensor(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t.value;
  throw FormatError("container " + magic + ": missing tensor '" + name + "'");
}

std::string encode_container(const TensorContainer& c) {
  require(c.magic.size() == 4, "container magic must be 4 bytes");
  nlohmann::json manifest;
  manifest["tensors"] = nlohmann::json::array();
  for (const auto& t : c.tensors) {
    manifest["tensors"].push_back({{"name", t.name}, {"rows", t.value.rows()}, {"cols", t.value.cols()}});
  }
  manifest["meta"] = c.meta;
  const std::string text = manifest.dump();

  std::string out;
  out += c.magic;
  put_u32(out, c.version);
  put_u64(out, text.size());
  out += text;
  for (const auto& t : c.tensors) {
    const float* p = t.value.data();
    for (Index i = 0; i < t.value.size(); ++i) put_u32(out, std::bit_cast<std::uint32_t>(p[i]));
  }
  return out;
}

TensorContainer decode_container(std::string_view bytes, std::string_view expected_magic) {
  Reader in(bytes);
  TensorContainer c;
  c.magic = std::string(in.take(4, "magic"));
  if (c.magic != expected_magic) {
    throw FormatError("bad magic: expected " + std::string(expected_magic) + ", found '" + c.magic +
                      "'");
  }
  c.version = static_cast<std::uint32_t>(in.le(4, "version"));
  if (c.version != kContainerVersion) {
    throw FormatError("unsupported version " + std::to_string(c.version) + " (expected " +
                      std::to_string(kContainerVersion) + ")");
  }
  const std::uint64_t length = in.le(8, "manifest length");
  if (length > in.remaining()) {
    throw FormatError("truncated container: manifest declares " + std::to_string(length) +
                      " bytes, only " + std::to_string(in.remaining()) + " remain");
  }
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in.take(static_cast<std::size_t>(length), "manifest"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!manifest.is_object() || !manifest.contains("tensors") || !manifest["tensors"].is_array()) {
    throw FormatError("manifest: missing 'tensors' array");
  }
  if (manifest.contains("meta")) c.meta = manifest["meta"];

  for (const auto& entry : manifest["tensors"]) {
    if (!entry.is_object() || !entry.contains("name") || !entry["name"].is_string() ||
        !entry.contains("rows") || !entry["rows"].is_number_unsigned() || !entry.contains("cols") ||
        !entry["cols"].is_number_unsigned()) {
      throw FormatError("manifest: malformed tensor entry " + entry.dump());
    }
    NamedTensor t;
    t.name = entry["name"].get<std::string>();
    const auto rows = entry["rows"].get<std::uint64_t>();
    const auto cols = entry["cols"].get<std::uint64_t>();
    if (rows > (1u << 24) || cols > (1u << 24) || rows * cols * 4 > in.remaining()) {
      throw FormatError("tensor '" + t.name + "': manifest declares " + std::to_string(rows) + "x" +
                        std::to_string(cols) + " but only " + std::to_string(in.remaining()) +
                        " payload bytes remain");
    }
    t.value.resize(static_cast<Index>(rows), static_cast<Index>(cols));
    float* p = t.value.data();
    for (Index i = 0; i < t.value.size(); ++i) {
      p[i] = std::bit_cast<float>(static_cast<std::uint32_t>(in.le(4, "tensor '" + t.name + "'")));
    }
    c.tensors.push_back(std::move(t));
  }
  if (in.remaining() != 0) {
    throw FormatError("container has " + std::to_string(in.remaining()) +
                      " trailing bytes after the last tensor");
  }
  return c;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot write " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw FormatError("write failed for " + path.string());
}

void write_container(const TensorContainer& container, const std::filesystem::path& path) {
  write_file(path, encode_container(container));
}

TensorContainer read_container(const std::filesystem::path& path, std::string_view expected_magic) {
  if (!std::filesystem::exists(path)) throw FormatError("missing file " + path.string());
  return decode_container(read_file(path), expected_magic);
}

}  // namespace t2c
