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

#include <filesystem>

#include "doctest.h"
#include "t2c/container.hpp"

using namespace t2c;

namespace {

TensorContainer sample_container() {
  TensorContainer c;
  c.magic = "TLMA";
  c.meta = {{"rank", 2}, {"tag", "L1"}};
  Matrix a(2, 3);
  a << 1.5f, -0.0f, 3.25e-8f, std::numeric_limits<float>::max(), -7.0f, 0.1f;
  Matrix b(1, 1);
  b << 42.0f;
  c.tensors = {{"a", a}, {"b", b}, {"empty", Matrix(0, 4)}};
  return c;
}

}  // namespace

TEST_CASE("container round-trips bit for bit") {
  const TensorContainer c = sample_container();
  const std::string bytes = encode_container(c);
  CHECK(bytes.substr(0, 4) == "TLMA");
  const TensorContainer back = decode_container(bytes, "TLMA");
  CHECK(back.meta == c.meta);
  REQUIRE(back.tensors.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.tensors[i].name == c.tensors[i].name);
    CHECK(back.tensors[i].value.rows() == c.tensors[i].value.rows());
    CHECK(back.tensors[i].value.cols() == c.tensors[i].value.cols());
    CHECK(std::memcmp(back.tensors[i].value.data(), c.tensors[i].value.data(),
                      sizeof(float) * static_cast<std::size_t>(c.tensors[i].value.size())) == 0);
  }
  CHECK(encode_container(back) == bytes);
  CHECK(back.tensor("b")(0, 0) == 42.0f);
  CHECK_THROWS_AS(back.tensor("zzz"), FormatError);
}

TEST_CASE("container rejects malformed bytes") {
  const std::string bytes = encode_container(sample_container());
  CHECK_THROWS_AS(decode_container(bytes, "TLMW"), FormatError);
  CHECK_THROWS_AS(decode_container(bytes.substr(0, bytes.size() - 1), "TLMA"), FormatError);
  CHECK_THROWS_AS(decode_container(bytes + "x", "TLMA"), FormatError);
  CHECK_THROWS_AS(decode_container(bytes.substr(0, 10), "TLMA"), FormatError);
  std::string bad_version = bytes;
  bad_version[4] = 9;
  CHECK_THROWS_AS(decode_container(bad_version, "TLMA"), FormatError);
  std::string bad_json = bytes;
  bad_json[16] = '!';
  CHECK_THROWS_AS(decode_container(bad_json, "TLMA"), FormatError);
}

TEST_CASE("container files") {
  const auto dir = std::filesystem::temp_directory_path() / "t2c_container_test";
  std::filesystem::create_directories(dir);
  const TensorContainer c = sample_container();
  write_container(c, dir / "x.tlma");
  CHECK(encode_container(read_container(dir / "x.tlma", "TLMA")) == encode_container(c));
  CHECK_THROWS_AS(read_container(dir / "missing.tlma", "TLMA"), FormatError);
  std::filesystem::remove_all(dir);
}
