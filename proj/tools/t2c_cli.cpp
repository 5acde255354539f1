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

// t2c: command-line driver for the adapter-fusion experiment.

#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "t2c/errors.hpp"
#include "t2c/evalharness.hpp"
#include "t2c/pipeline.hpp"

namespace {

struct Common {
  std::string config;
  std::string run_dir;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON run configuration");
  cmd->add_option("--run-dir", c.run_dir, "Run directory (overrides the config)");
  cmd->add_option("--seed", c.seed, "Seed (overrides the config)");
}

t2c::RunConfig resolve(const Common& c) {
  t2c::RunConfig cfg = c.config.empty() ? t2c::RunConfig::defaults() : t2c::load_run_config(c.config);
  if (!c.run_dir.empty()) cfg.run_dir = c.run_dir;
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

std::vector<double> parse_weights(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw t2c::ConfigError("bad merge weight '" + item + "'");
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Per-language low-rank adapters, linear merging and learned fusion for text-to-query generation"};
  app.require_subcommand(1);
  Common common;

  auto* gen = app.add_subcommand("gen-corpus", "Write corpus.jsonl, graph.jsonl and splits.json");
  add_common(gen, common);
  std::string out_dir;
  gen->add_option("--out", out_dir, "Output directory (same as --run-dir)");

  auto* pretrain = app.add_subcommand("pretrain-base", "Train the base model, write base.tlmw");
  add_common(pretrain, common);

  auto* adapter = app.add_subcommand("train-adapter", "Train one language adapter");
  add_common(adapter, common);
  std::string lang;
  adapter->add_option("--lang", lang, "L1, L2 or L3")->required();

  auto* merge = app.add_subcommand("merge-adapters", "Linearly merge the three language adapters");
  add_common(merge, common);
  std::string weights;
  bool uniform = false;
  auto* wopt = merge->add_option("--weights", weights, "Comma-separated weights w1,w2,w3");
  auto* uopt = merge->add_flag("--uniform", uniform, "Equal weights (default)");
  wopt->excludes(uopt);

  auto* fusion = app.add_subcommand("train-fusion", "Train the fusion gate, write gate.tlmg");
  add_common(fusion, common);
  std::optional<int> subset;
  fusion->add_option("--subset-per-lang", subset, "Shared questions per language used for gate training");

  auto* joint = app.add_subcommand("train-joint", "Train one adapter on all languages");
  add_common(joint, common);

  auto* eval = app.add_subcommand("evaluate", "Evaluate a model on the test split");
  add_common(eval, common);
  std::string model;
  eval->add_option("--model", model, "base | adapter:<L> | merged | fused | joint")->required();

  auto* cost = app.add_subcommand("cost-table", "Print training instances when adding languages");
  std::int64_t per_lang = 12000, subset_count = 2500;
  int max_langs = 4;
  cost->add_option("--per-lang", per_lang, "Instances per language")->capture_default_str();
  cost->add_option("--subset", subset_count, "Fusion instances per language")->capture_default_str();
  cost->add_option("--max-langs", max_langs, "Largest language count")->capture_default_str();

  auto* all = app.add_subcommand("run-all", "Run the whole pipeline for one seed");
  add_common(all, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (cost->parsed()) {
      std::cout << t2c::format_cost_table(t2c::cost_table(per_lang, subset_count, max_langs));
      return 0;
    }
    if (!out_dir.empty()) common.run_dir = out_dir;
    t2c::Pipeline pipe(resolve(common), &std::cerr);
    if (gen->parsed()) pipe.gen_corpus();
    else if (pretrain->parsed()) pipe.pretrain_base();
    else if (adapter->parsed()) pipe.train_adapter(t2c::parse_language(lang));
    else if (merge->parsed()) pipe.merge_adapters(weights.empty() ? std::vector<double>{} : parse_weights(weights));
    else if (fusion->parsed()) pipe.train_fusion(subset);
    else if (joint->parsed()) pipe.train_joint();
    else if (eval->parsed()) std::cout << pipe.evaluate(model).to_text();
    else if (all->parsed()) pipe.run_all();
  } catch (const std::exception& e) {
    std::cerr << "t2c: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
