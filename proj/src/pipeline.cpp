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

#include "t2c/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>

#include "t2c/merging.hpp"

namespace t2c {

RunConfig RunConfig::defaults() {
  RunConfig c;
  c.pretrain.learning_rate = 3e-3;
  c.pretrain.batch_size = 4;
  c.pretrain.grad_accum = 1;
  c.pretrain.warmup_steps = 20;
  c.pretrain.epochs = 6;
  c.adapter.learning_rate = 3e-3;
  c.adapter.batch_size = 8;
  c.adapter.grad_accum = 1;
  c.adapter.warmup_steps = 10;
  c.adapter.epochs = 4;
  c.joint = c.adapter;
  c.fusion.learning_rate = 1e-3;
  c.fusion.batch_size = 8;
  c.fusion.grad_accum = 1;
  c.fusion.warmup_steps = 5;
  c.fusion.epochs = 3;
  return c;
}

void RunConfig::validate() const {
  if (graph_size < 10) throw ConfigError("graph_size must be >= 10");
  if (run_dir.empty()) throw ConfigError("run_dir must not be empty");
  ModelConfig m = model;
  if (m.vocab_size == 0) m.vocab_size = 4;
  m.validate();
  split.validate();
  if (lora.rank < 1) throw ConfigError("lora rank must be >= 1");
  if (!(lora.dropout >= 0.0 && lora.dropout < 1.0)) throw ConfigError("lora dropout must be in [0, 1)");
  pretrain.validate();
  adapter.validate();
  joint.validate();
  fusion.validate();
  if (eval.max_new < 1) throw ConfigError("eval max_new must be >= 1");
  if (eval.test_per_lang < 0) throw ConfigError("eval test_per_lang must be >= 0");
}

nlohmann::json to_json(const RunConfig& cfg) {
  nlohmann::json model = to_json(cfg.model);
  model.erase("vocab_size");
  return {{"seed", cfg.seed},
          {"run_dir", cfg.run_dir.string()},
          {"graph_size", cfg.graph_size},
          {"model", model},
          {"split",
           {{"shared_all", cfg.split.shared_all},
            {"pair", cfg.split.pair},
            {"unique", cfg.split.unique},
            {"test", cfg.split.test},
            {"fusion_per_lang", cfg.split.fusion_per_lang}}},
          {"lora",
           {{"rank", cfg.lora.rank},
            {"alpha", cfg.lora.alpha},
            {"dropout", cfg.lora.dropout},
            {"target_modules", cfg.lora.target_modules}}},
          {"pretrain", to_json(cfg.pretrain)},
          {"adapter", to_json(cfg.adapter)},
          {"joint", to_json(cfg.joint)},
          {"fusion", to_json(cfg.fusion)},
          {"eval", {{"max_new", cfg.eval.max_new}, {"test_per_lang", cfg.eval.test_per_lang}}}};
}

namespace {

int get_int(const std::string& where, const nlohmann::json& v) {
  if (!v.is_number_integer()) throw ConfigError(where + " must be an integer");
  return v.get<int>();
}

double get_number(const std::string& where, const nlohmann::json& v) {
  if (!v.is_number()) throw ConfigError(where + " must be a number");
  return v.get<double>();
}

void require_object(const std::string& where, const nlohmann::json& v) {
  if (!v.is_object()) throw ConfigError(where + " must be an object");
}

}  // namespace

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c = RunConfig::defaults();
  require_object("config", j);
  for (const auto& [key, v] : j.items()) {
    if (key == "seed") {
      if (!v.is_number_unsigned()) throw ConfigError("seed must be a non-negative integer");
      c.seed = v.get<std::uint64_t>();
    } else if (key == "run_dir") {
      if (!v.is_string()) throw ConfigError("run_dir must be a string");
      c.run_dir = v.get<std::string>();
    } else if (key == "graph_size") {
      c.graph_size = get_int(key, v);
    } else if (key == "model") {
      require_object(key, v);
      if (v.contains("vocab_size")) throw ConfigError("model.vocab_size is derived from the corpus");
      nlohmann::json merged = to_json(c.model);
      for (const auto& [k, x] : v.items()) {
        if (!merged.contains(k)) throw ConfigError("unknown config key 'model." + k + "'");
        merged[k] = x;
      }
      c.model = model_config_from_json(merged);
    } else if (key == "split") {
      require_object(key, v);
      for (const auto& [k, x] : v.items()) {
        const std::string where = "split." + k;
        if (k == "shared_all") c.split.shared_all = get_int(where, x);
        else if (k == "pair") c.split.pair = get_int(where, x);
        else if (k == "unique") c.split.unique = get_int(where, x);
        else if (k == "test") c.split.test = get_int(where, x);
        else if (k == "fusion_per_lang") c.split.fusion_per_lang = get_int(where, x);
        else throw ConfigError("unknown config key '" + where + "'");
      }
    } else if (key == "lora") {
      require_object(key, v);
      for (const auto& [k, x] : v.items()) {
        const std::string where = "lora." + k;
        if (k == "rank") c.lora.rank = get_int(where, x);
        else if (k == "alpha") c.lora.alpha = get_number(where, x);
        else if (k == "dropout") c.lora.dropout = get_number(where, x);
        else if (k == "target_modules") {
          if (!x.is_array()) throw ConfigError(where + " must be a list of names");
          c.lora.target_modules = x.get<std::vector<std::string>>();
        } else throw ConfigError("unknown config key '" + where + "'");
      }
    } else if (key == "pretrain") {
      c.pretrain = train_config_from_json(v, c.pretrain);
    } else if (key == "adapter") {
      c.adapter = train_config_from_json(v, c.adapter);
    } else if (key == "joint") {
      c.joint = train_config_from_json(v, c.joint);
    } else if (key == "fusion") {
      c.fusion = train_config_from_json(v, c.fusion);
    } else if (key == "eval") {
      require_object(key, v);
      for (const auto& [k, x] : v.items()) {
        if (k == "max_new") c.eval.max_new = get_int("eval." + k, x);
        else if (k == "test_per_lang") c.eval.test_per_lang = get_int("eval." + k, x);
        else throw ConfigError("unknown config key 'eval." + k + "'");
      }
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

std::string model_file_name(const std::string& model) {
  if (model == "base" || model == "merged" || model == "fused" || model == "joint") return model;
  if (model.rfind("adapter:", 0) == 0) {
    return "adapter_" + to_string(parse_language(std::string_view(model).substr(8)));
  }
  throw ConfigError("unknown model '" + model + "' (base, adapter:L1|L2|L3, merged, fused, joint)");
}

Pipeline::Pipeline(RunConfig cfg, std::ostream* log) : cfg_(std::move(cfg)), log_(log) {
  cfg_.validate();
}

void Pipeline::note(const std::string& line) const {
  if (log_) *log_ << line << std::endl;
}

void Pipeline::write_json(const std::string& file, const nlohmann::json& j) const {
  write_file(path(file), j.dump(2) + "\n");
}

std::uint64_t Pipeline::stage_seed(std::uint64_t stage, const TrainConfig& tc) const {
  return cfg_.seed * 0x9E3779B97F4A7C15ULL + stage * 0x100000001B3ULL + tc.seed;
}

namespace {

std::string read_artifact(const std::filesystem::path& p, const std::string& hint) {
  if (!std::filesystem::exists(p)) {
    throw MissingArtifact("missing " + p.string() + " (run '" + hint + "' first)");
  }
  return read_file(p);
}

}  // namespace

ParallelCorpus Pipeline::load_corpus() const {
  return ParallelCorpus::from_jsonl(read_artifact(path("corpus.jsonl"), "gen-corpus"), cfg_.split);
}

ql::GraphStore Pipeline::load_graph() const {
  return ql::GraphStore::from_jsonl(read_artifact(path("graph.jsonl"), "gen-corpus"));
}

LoadedBase Pipeline::load_base_model() const {
  read_artifact(path("base.tlmw"), "pretrain-base");
  return load_base(path("base.tlmw"));
}

LoraAdapter Pipeline::load_adapter_file(const std::string& file, const std::string& hint) const {
  read_artifact(path(file), hint);
  return load_adapter(path(file));
}

std::vector<Sample> Pipeline::test_samples(const ParallelCorpus& corpus) const {
  std::vector<Sample> out;
  for (Language lang : kLanguages) {
    std::vector<Sample> t = corpus.test(lang);
    if (cfg_.eval.test_per_lang > 0 && static_cast<int>(t.size()) > cfg_.eval.test_per_lang) {
      t.resize(static_cast<std::size_t>(cfg_.eval.test_per_lang));
    }
    out.insert(out.end(), t.begin(), t.end());
  }
  return out;
}

void Pipeline::gen_corpus() {
  Rng rng(cfg_.seed);
  Rng graph_rng = rng.split();
  Rng corpus_rng = rng.split();
  const Schema schema = default_schema();
  const ql::GraphStore graph = gen_graph(schema, cfg_.graph_size, graph_rng);
  const ParallelCorpus corpus = t2c::gen_corpus(schema, cfg_.split, graph, corpus_rng);
  write_file(path("graph.jsonl"), graph.to_jsonl());
  write_file(path("corpus.jsonl"), corpus.to_jsonl());
  nlohmann::ordered_json splits;
  splits["spec"] = {{"shared_all", cfg_.split.shared_all}, {"pair", cfg_.split.pair},
                    {"unique", cfg_.split.unique},         {"test", cfg_.split.test},
                    {"fusion_per_lang", cfg_.split.fusion_per_lang}};
  for (Language lang : kLanguages) {
    std::map<std::string, int> sharing;
    for (const auto& s : corpus.train(lang)) ++sharing[s.sharing];
    splits[to_string(lang)] = {{"train", corpus.train(lang).size()},
                               {"test", corpus.test(lang).size()},
                               {"train_sharing", sharing}};
  }
  write_file(path("splits.json"), splits.dump(2) + "\n");
  note("gen-corpus: " + std::to_string(corpus.samples.size()) + " samples, " +
       std::to_string(graph.nodes().size()) + " nodes");
}

void Pipeline::pretrain_base() {
  const ParallelCorpus corpus = load_corpus();
  TrainConfig tc = cfg_.pretrain;
  tc.seed = stage_seed(1, cfg_.pretrain);
  Rng rng(tc.seed);
  BaseTrainResult r = t2c::pretrain_base(corpus, cfg_.model, tc, rng);
  save_base(r.weights, r.vocab, path("base.tlmw"));
  write_json("pretrain_report.json", r.report.to_json());
  note("pretrain-base: vocab " + std::to_string(r.vocab.size()) + ", loss " +
       std::to_string(r.report.initial_loss) + " -> " + std::to_string(r.report.final_loss) + " in " +
       std::to_string(r.report.wall_seconds) + " s");
}

void Pipeline::train_adapter(Language lang) {
  const ParallelCorpus corpus = load_corpus();
  const LoadedBase base = load_base_model();
  TrainConfig tc = cfg_.adapter;
  tc.seed = stage_seed(10 + index_of(lang), cfg_.adapter);
  AdapterTrainResult r = t2c::train_adapter(base.weights, base.vocab, lang, corpus, cfg_.lora, tc);
  const std::string stem = "adapter_" + to_string(lang);
  save_adapter(r.adapter, path(stem + ".tlma"));
  write_json(stem + "_report.json", r.report.to_json());
  note("train-adapter " + to_string(lang) + ": loss " + std::to_string(r.report.initial_loss) + " -> " +
       std::to_string(r.report.final_loss) + " in " + std::to_string(r.report.wall_seconds) + " s");
}

void Pipeline::merge_adapters(const std::vector<double>& weights) {
  std::vector<LoraAdapter> adapters;
  for (Language lang : kLanguages) {
    adapters.push_back(load_adapter_file("adapter_" + to_string(lang) + ".tlma",
                                         "train-adapter --lang " + to_string(lang)));
  }
  const MergeSpec spec = weights.empty() ? MergeSpec::uniform(adapters.size()) : MergeSpec{weights, false};
  save_adapter(linear_merge(adapters, spec), path("adapter_merged.tlma"));
  note("merge-adapters: wrote adapter_merged.tlma");
}

void Pipeline::train_fusion(std::optional<int> subset_per_lang) {
  const ParallelCorpus corpus = load_corpus();
  const LoadedBase base = load_base_model();
  FusedModel model;
  model.base = &base.weights;
  std::vector<std::string> order;
  for (Language lang : kLanguages) {
    model.adapters.push_back(load_adapter_file("adapter_" + to_string(lang) + ".tlma",
                                               "train-adapter --lang " + to_string(lang)));
    order.push_back(to_string(lang));
  }
  TrainConfig tc = cfg_.fusion;
  tc.seed = stage_seed(20, cfg_.fusion);
  Rng rng(tc.seed);
  Rng init_rng = rng.split();
  Rng subset_rng = rng.split();
  model.gate = init_gate(static_cast<int>(model.adapters.size()), base.weights.config.hidden,
                         base.weights.config.vocab_size, order, init_rng);
  const int per_lang = subset_per_lang.value_or(cfg_.split.fusion_per_lang);
  if (per_lang < 1) throw ConfigError("fusion subset must hold at least one question per language");
  const std::vector<Sample> subset = fusion_subset(corpus, per_lang, subset_rng);
  GateTrainResult r = train_gate(model, subset, base.vocab, tc, rng);
  save_gate(r.gate, path("gate.tlmg"));
  write_json("fusion_report.json", r.report.to_json());
  note("train-fusion: " + std::to_string(subset.size()) + " instances, loss " +
       std::to_string(r.report.initial_loss) + " -> " + std::to_string(r.report.final_loss) + " in " +
       std::to_string(r.report.wall_seconds) + " s");
}

void Pipeline::train_joint() {
  const ParallelCorpus corpus = load_corpus();
  const LoadedBase base = load_base_model();
  TrainConfig tc = cfg_.joint;
  tc.seed = stage_seed(30, cfg_.joint);
  AdapterTrainResult r = t2c::train_joint(base.weights, base.vocab, corpus, cfg_.lora, tc);
  save_adapter(r.adapter, path("adapter_joint.tlma"));
  write_json("joint_report.json", r.report.to_json());
  note("train-joint: loss " + std::to_string(r.report.initial_loss) + " -> " +
       std::to_string(r.report.final_loss) + " in " + std::to_string(r.report.wall_seconds) + " s");
}

namespace {

int room(const BaseWeights& base, std::size_t prompt_len, int max_new) {
  return std::max(0, std::min(max_new, base.config.max_seq - static_cast<int>(prompt_len)));
}

std::string strip_eos(std::vector<int> ids, const Vocab& vocab) {
  if (!ids.empty() && ids.back() == Vocab::kEos) ids.pop_back();
  return detokenize(ids, vocab);
}

}  // namespace

EvalReport Pipeline::evaluate(const std::string& model) {
  const std::string name = model_file_name(model);
  // Model artifacts first, so the diagnostic names the stage that is missing.
  std::optional<LoraAdapter> single;
  std::optional<FusedModel> fused;
  if (name == "merged") {
    single = load_adapter_file("adapter_merged.tlma", "merge-adapters");
  } else if (name == "joint") {
    single = load_adapter_file("adapter_joint.tlma", "train-joint");
  } else if (name.rfind("adapter_", 0) == 0) {
    const std::string lang = name.substr(8);
    single = load_adapter_file(name + ".tlma", "train-adapter --lang " + lang);
  } else if (name == "fused") {
    FusedModel f;
    read_artifact(path("gate.tlmg"), "train-fusion");
    f.gate = load_gate(path("gate.tlmg"));
    for (const auto& tag : f.gate.adapter_order) {
      f.adapters.push_back(load_adapter_file("adapter_" + tag + ".tlma", "train-adapter --lang " + tag));
    }
    fused = std::move(f);
  }
  const ParallelCorpus corpus = load_corpus();
  const ql::GraphStore graph = load_graph();
  const LoadedBase base = load_base_model();
  const std::vector<Sample> test = test_samples(corpus);
  const int max_new = cfg_.eval.max_new;
  if (fused) fused->base = &base.weights;

  std::unordered_map<std::string, Language> language_of;
  for (const auto& s : test) language_of[s.prompt] = s.language;
  std::array<int, 3> routed{}, seen{};
  std::array<std::array<double, 3>, 3> weight_sum{};

  Decoder decoder = [&](const std::string& prompt) {
    const std::vector<int> ids = tokenize(prompt, base.vocab);
    const int budget = room(base.weights, ids.size(), max_new);
    if (budget == 0) return std::string();
    if (fused) {
      Vector w;
      std::vector<int> out = fused_decode(*fused, ids, budget, &w);
      auto it = language_of.find(prompt);
      if (it != language_of.end() && w.size() == 3) {
        const std::size_t l = index_of(it->second);
        ++seen[l];
        if (argmax(w.data(), w.size()) == static_cast<int>(l)) ++routed[l];
        for (int i = 0; i < 3; ++i) weight_sum[l][static_cast<std::size_t>(i)] += w[i];
      }
      return strip_eos(std::move(out), base.vocab);
    }
    return strip_eos(greedy_decode(base.weights, single ? &*single : nullptr, ids, budget), base.vocab);
  };

  std::vector<std::string> failures;
  EvalReport report = evaluate_model(name, decoder, test, graph, cfg_.seed, &failures);
  nlohmann::json j;
  if (name != "base") {
    const EvalReport base_report =
        std::filesystem::exists(path("eval_base.json"))
            ? eval_report_from_json(nlohmann::json::parse(read_file(path("eval_base.json"))))
            : evaluate(std::string("base"));
    attach_deltas(report, base_report);
  }
  j = report.to_json();
  if (fused) {
    nlohmann::json routing = nlohmann::json::object();
    int hit = 0, total = 0;
    for (Language lang : kLanguages) {
      const std::size_t l = index_of(lang);
      hit += routed[l];
      total += seen[l];
      std::vector<double> mean_w(3, 0.0);
      for (int i = 0; i < 3; ++i) mean_w[static_cast<std::size_t>(i)] = seen[l] ? weight_sum[l][static_cast<std::size_t>(i)] / seen[l] : 0.0;
      routing[to_string(lang)] = {{"accuracy", seen[l] ? static_cast<double>(routed[l]) / seen[l] : 0.0},
                                  {"mean_weights", mean_w}};
    }
    j["routing"] = routing;
    j["routing_accuracy"] = total ? static_cast<double>(hit) / total : 0.0;
  }
  j["failure_log"] = failures.size() > 20 ? std::vector<std::string>(failures.begin(), failures.begin() + 20) : failures;
  write_json("eval_" + name + ".json", j);
  write_file(path("eval_" + name + ".txt"), report.to_text());
  note("evaluate " + name + ": ROUGE-L " + std::to_string(report.avg_rouge) + ", EM " + std::to_string(report.avg_em));
  return report;
}

void Pipeline::run_all() {
  gen_corpus();
  pretrain_base();
  for (Language lang : kLanguages) train_adapter(lang);
  merge_adapters();
  train_fusion();
  train_joint();
  std::vector<EvalReport> reports;
  nlohmann::ordered_json summary;
  nlohmann::json routing;
  for (const std::string m : {"base", "adapter:L1", "adapter:L2", "adapter:L3", "merged", "fused", "joint"}) {
    reports.push_back(evaluate(m));
  }
  const nlohmann::json fused_json = nlohmann::json::parse(read_file(path("eval_fused.json")));
  const EvalReport& base = reports[0];
  const EvalReport& fused = reports[5];
  const EvalReport& joint = reports[6];
  auto ratio = [](double f, double b, double j) -> nlohmann::json {
    const double gain = j - b;
    if (std::abs(gain) < 1e-12) return nullptr;
    return (f - b) / gain;
  };
  summary["seed"] = cfg_.seed;
  nlohmann::ordered_json models;
  for (const auto& r : reports) models[r.model] = r.to_json();
  summary["models"] = models;
  summary["routing_accuracy"] = fused_json.at("routing_accuracy");
  summary["recovery_ratio"] = {{"rouge_l", ratio(fused.avg_rouge, base.avg_rouge, joint.avg_rouge)},
                               {"exact_match", ratio(fused.avg_em, base.avg_em, joint.avg_em)}};
  write_file(path("summary.json"), summary.dump(2) + "\n");
  std::ostringstream text;
  text << comparison_table(reports) << "\n";
  text << "routing accuracy: " << fused_json.at("routing_accuracy").get<double>() << "\n";
  text << "recovery ratio (fused - base) / (joint - base): ROUGE-L "
       << summary["recovery_ratio"]["rouge_l"].dump() << ", EM " << summary["recovery_ratio"]["exact_match"].dump()
       << "\n";
  write_file(path("summary.txt"), text.str());
  note(text.str());
}

}  // namespace t2c
