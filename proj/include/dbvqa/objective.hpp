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

#include <span>

#include "dbvqa/autodiff.hpp"

namespace dbvqa {

/// Scalar values of one composed objective evaluation, in nats.
/// total = l1 + beta * l_adv + lambda * l2.
struct LossBreakdown {
  double l1 = 0.0;
  double l_adv = 0.0;
  double l2 = 0.0;
  double total = 0.0;
  double lambda = 0.0;
  double beta = 0.0;
  DiffValue total_node;  // differentiable handle to total
};

/// -log softmax(logits)[answer], log-sum-exp stabilized.
DiffValue cross_entropy(Tape& tape, DiffValue logits, int answer_id);

/// KL(softmax(s1) || softmax(s2)), computed in log space. Gradients flow
/// into both inputs unless the corresponding stop flag is set (stop_grad_s1
/// is the ablation knob; stop_grad_s2 exists for gradient-decomposition
/// tests).
DiffValue kl_divergence(Tape& tape, DiffValue s1, DiffValue s2,
                        bool stop_grad_s1 = false, bool stop_grad_s2 = false);

/// Single-evaluation composition. s2 may be invalid when both lambda and
/// beta are zero (baseline mode skips the adversarial branch entirely).
LossBreakdown total_loss(Tape& tape, DiffValue s1, DiffValue s2, int answer_id,
                         double lambda, double beta, bool kl_stop_grad_s1 = false);

/// Batch composition: per-sample CE/KL terms are averaged first, then
/// combined, so lambda and beta are batch-size independent.
LossBreakdown total_loss_batch(Tape& tape, std::span<const DiffValue> s1,
                               std::span<const DiffValue> s2,
                               std::span<const int> answer_ids, double lambda,
                               double beta, bool kl_stop_grad_s1 = false);

}  // namespace dbvqa
