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

#ifndef T2C_ERRORS_HPP_
#define T2C_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace t2c {

// A caller broke a documented precondition (shape mismatch, empty input...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Invalid user-facing configuration: unknown adapter target, bad run config.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent file contents.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Adapters that cannot be combined (rank or shape mismatch).
class IncompatibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A pipeline step needs a file an earlier step writes.
class MissingArtifact : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ContractError(what);
}

}  // namespace t2c

#endif  // T2C_ERRORS_HPP_
