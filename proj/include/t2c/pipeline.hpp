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

// End-to-end experiment over a flat run directory:
//
//   corpus.jsonl graph.jsonl splits.json      gen-corpus
//   base.tlmw pretrain_report.json            pretrain-base
//   adapter_<L>.tlma adapter_<L>_report.json  train-adapter
//   adapter_merged.tlma                       merge-adapters
//   gate.tlmg fusion_report.json              train-fusion
//   adapter_joint.tlma joint_report.json      train-joint
//   eval_<model>.json eval_<model>.txt        evaluate
//   summary.json summary.txt                  run-all

#ifndef T2C_PIPELINE_HPP_
#define T2C_PIPELINE_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "t2c/corpus.hpp"
#include "t2c/evalharness.hpp"
#include "t2c/fusion.hpp"
#include "t2c/lora.hpp"
#include "t2c/model.hpp"
#include "t2c/training.hpp"

namespace t2c {

struct EvalConfig {
  int max_new = 48;
  // Questions per language taken from the front of the test split; 0 = all.
  int test_per_lang = 0;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path run_dir = "run";
  int graph_size = 200;
  ModelConfig model;
  SplitSpec split;
  LoraSpec lora;
  TrainConfig pretrain;
  TrainConfig adapter;
  TrainConfig joint;
  TrainConfig fusion;
  EvalConfig eval;

  // Desk-scale defaults used by run-all and the acceptance suite.
  static RunConfig defaults();
  void validate() const;
};

nlohmann::json to_json(const RunConfig& cfg);
// Overrides defaults() with the keys present; unknown keys throw ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

// "base", "adapter:L1", "merged", "fused", "joint" -> file stem suffix
// ("base", "adapter_L1", ...). Throws ConfigError for anything else.
std::string model_file_name(const std::string& model);

class Pipeline {
 public:
  explicit Pipeline(RunConfig cfg, std::ostream* log = nullptr);

  const RunConfig& config() const { return cfg_; }
  std::filesystem::path path(const std::string& file) const { return cfg_.run_dir / file; }

  void gen_corpus();
  void pretrain_base();
  void train_adapter(Language lang);
  // Empty weights select uniform weights.
  void merge_adapters(const std::vector<double>& weights = {});
  void train_fusion(std::optional<int> subset_per_lang = std::nullopt);
  void train_joint();
  EvalReport evaluate(const std::string& model);
  void run_all();

 private:
  ParallelCorpus load_corpus() const;
  ql::GraphStore load_graph() const;
  LoadedBase load_base_model() const;
  LoraAdapter load_adapter_file(const std::string& file, const std::string& hint) const;
  std::vector<Sample> test_samples(const ParallelCorpus& corpus) const;
  std::uint64_t stage_seed(std::uint64_t stage, const TrainConfig& tc) const;
  void write_json(const std::string& file, const nlohmann::json& j) const;
  void note(const std::string& line) const;

  RunConfig cfg_;
  std::ostream* log_;
};

}  // namespace t2c

#endif  // T2C_PIPELINE_HPP_
