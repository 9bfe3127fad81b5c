/*
 * Copyright 2026 The dbvqa Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dbvqa/datagen.hpp"
#include "dbvqa/model.hpp"

namespace dbvqa {

enum class TrainMode { debiased, baseline };
const char* train_mode_name(TrainMode m);
TrainMode train_mode_from_name(const std::string& name);

struct TrainConfig {
  int epochs = 30;
  int batch_size = 64;
  double learning_rate = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double lambda = 0.1;
  double beta = 1.0;
  double alpha = 1.0;
  uint64_t seed = 0;
  TrainMode mode = TrainMode::debiased;
  bool kl_stop_grad_s1 = false;

  void validate() const;
  /// lambda/beta after mode forcing (baseline runs with both at zero).
  double effective_lambda() const { return mode == TrainMode::baseline ? 0.0 : lambda; }
  double effective_beta() const { return mode == TrainMode::baseline ? 0.0 : beta; }

  static TrainConfig desk_profile();
  static TrainConfig paper_profile();
};

struct EpochRecord {
  int epoch = 0;
  double l1 = 0.0;
  double l_adv = 0.0;
  double l2 = 0.0;
  double total = 0.0;
  double acc1 = 0.0;
  double acc2 = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
};

struct TrainResult {
  ModelParams params;
  TrainLog log;
};

/// Adam with bias correction; epsilon is added outside the square root.
/// One instance owns the moment state for a fixed parameter list.
class AdamOptimizer {
 public:
  AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  /// Applies one update step; params[i] is adjusted in place by grads[i].
  void step(std::vector<Tensor*> params, const std::vector<const Tensor*>& grads);

  int64_t steps_taken() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

/// Batch order for one epoch: a pure function of (seed, epoch).
std::vector<int> epoch_shuffle(int n, uint64_t seed, int epoch);

/// Per-sample crop stream, independent of batch composition.
Rng crop_rng_for(uint64_t seed, int epoch, int dataset_index);

/// Deterministic mini-batch training. Initializes parameters from
/// config.seed, runs epochs x shuffled batches of forward_train ->
/// total_loss -> backward -> Adam, and returns final parameters plus the
/// per-epoch log. Baseline mode never builds the adversarial branch.
/// Throws NonFiniteLoss with epoch/batch coordinates on divergence.
TrainResult train(const ModelConfig& model_config, const TrainConfig& train_config,
                  const DatasetSplit& dataset,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

// ---------------------------------------------------------------------------
// Checkpoints: 8-byte magic "DBVQA001", u32 little-endian header length,
// UTF-8 JSON header {name: {shape, dtype, byte_offset}}, then raw
// little-endian float32 blocks in header order.
// ---------------------------------------------------------------------------

inline constexpr char kCheckpointMagic[9] = "DBVQA001";

std::vector<uint8_t> serialize_checkpoint(const ModelParams& params);
ModelParams deserialize_checkpoint(const std::vector<uint8_t>& bytes);
void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

}  // namespace dbvqa
