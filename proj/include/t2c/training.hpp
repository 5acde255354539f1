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

// Manual backpropagation through the decoder, the AdamW optimizer with a
// linear warmup/decay schedule, and the three training drivers.
//
// The loss is the token-mean next-token cross-entropy over an example's
// target positions. Fine-tuning examples target only the gold-query tokens
// (plus EOS); pretraining examples target every token after BOS.

#ifndef T2C_TRAINING_HPP_
#define T2C_TRAINING_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"
#include "t2c/corpus.hpp"
#include "t2c/lora.hpp"
#include "t2c/model.hpp"
#include "t2c/vocab.hpp"

namespace t2c {

struct TrainConfig {
  double learning_rate = 2e-4;
  int batch_size = 2;
  int grad_accum = 4;
  int warmup_steps = 5;
  int epochs = 1;
  double weight_decay = 0.01;
  double clip_norm = 1.0;
  std::uint64_t seed = 0;

  // Throws ConfigError.
  void validate() const;
  int effective_batch() const { return batch_size * grad_accum; }
  bool operator==(const TrainConfig&) const = default;
};

nlohmann::json to_json(const TrainConfig& cfg);
// Starts from base and overrides the keys present in j; unknown keys throw.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

// initial_loss is the first step's loss (before any update); final_loss is
// the mean of the last min(10, steps) step losses.
struct TrainReport {
  std::vector<double> step_losses;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double wall_seconds = 0.0;
  std::int64_t instance_count = 0;
  int steps = 0;

  nlohmann::json to_json() const;
};

// Token ids plus the first position whose token is a prediction target.
struct Example {
  std::vector<int> ids;
  std::size_t target_start = 1;

  std::size_t target_count() const { return ids.size() - target_start; }
};

// tokenize(prompt) ++ gold words ++ EOS, targets = gold words and EOS.
Example make_example(const Sample& sample, const Vocab& vocab);
// Same sequence with every token after BOS as a target.
Example make_pretrain_example(const Sample& sample, const Vocab& vocab);

// 0 -> peak over warmup steps, then linear decay to 0 at total_steps.
double lr_at(const TrainConfig& cfg, int step, int total_steps);

// Mean cross-entropy over all target tokens of the batch and its gradient
// with respect to the adapter factors only. The base is never differentiated.
template <typename S>
double loss_and_grads(const BasicWeights<S>& base, const BasicLoraAdapter<S>& adapter,
                      std::span<const Example> batch, BasicLoraAdapter<S>& grads,
                      Rng* dropout_rng = nullptr);

// Same loss, gradient with respect to every base parameter.
template <typename S>
double base_loss_and_grads(const BasicWeights<S>& weights, std::span<const Example> batch,
                           BasicWeights<S>& grads);

// Loss only.
double batch_loss(const BaseWeights& base, const LoraAdapter* adapter, std::span<const Example> batch);

struct AdapterTrainResult {
  LoraAdapter adapter;
  TrainReport report;
};

// One adapter on one language's training split. lora.target_modules empty
// selects the default targets; the language tag is set from lang.
AdapterTrainResult train_adapter(const BaseWeights& base, const Vocab& vocab, Language lang,
                                 const ParallelCorpus& corpus, LoraSpec lora,
                                 const TrainConfig& cfg);
AdapterTrainResult train_adapter(const BaseWeights& base, const Vocab& vocab,
                                 std::string_view lang, const ParallelCorpus& corpus, LoraSpec lora,
                                 const TrainConfig& cfg);

// One adapter on the shuffled union of every language's training split.
AdapterTrainResult train_joint(const BaseWeights& base, const Vocab& vocab,
                               const ParallelCorpus& corpus, LoraSpec lora, const TrainConfig& cfg);

// Generic driver used by the ones above, exposed for tests.
AdapterTrainResult fit_adapter(const BaseWeights& base, LoraAdapter adapter,
                               const std::vector<Example>& data, const TrainConfig& cfg);

struct BaseTrainResult {
  BaseWeights weights;
  Vocab vocab;
  TrainReport report;
};

// Builds the vocabulary from the corpus and trains a fresh base on a mixture
// of every L1 training sequence with L2 and L3 subsampled to 70/20/10.
BaseTrainResult pretrain_base(const ParallelCorpus& corpus, ModelConfig model_cfg,
                              const TrainConfig& cfg, Rng& rng);

// Pretraining mixture as indices into corpus.samples, drawn once.
std::vector<std::size_t> pretrain_mixture(const ParallelCorpus& corpus, Rng& rng);

BaseTrainResult fit_base(BaseWeights weights, Vocab vocab, const std::vector<Example>& data,
                         const TrainConfig& cfg);

// AdamW (beta 0.9 / 0.999, eps 1e-8) with decoupled weight decay.
class AdamW {
 public:
  AdamW(std::vector<Matrix*> params, std::vector<bool> decay);
  // grads aligned with params; updates in place.
  void step(const std::vector<const Matrix*>& grads, double lr, double weight_decay);
  int steps() const { return t_; }

 private:
  std::vector<Matrix*> params_;
  std::vector<bool> decay_;
  std::vector<Matrix> m_, v_;
  int t_ = 0;
};

// Scales grads in place so that their global L2 norm is at most max_norm;
// returns the norm before clipping.
double clip_global_norm(const std::vector<Matrix*>& grads, double max_norm);

}  // namespace t2c

#endif  // T2C_TRAINING_HPP_
