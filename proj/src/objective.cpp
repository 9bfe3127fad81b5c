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

#include "dbvqa/objective.hpp"

#include <cmath>
#include <vector>

#include "dbvqa/errors.hpp"

namespace dbvqa {

namespace {

/// log softmax of a logit vector, stabilized by the max.
std::vector<double> log_softmax(const Tensor& logits) {
  double mx = logits.v[0];
  for (double x : logits.v) mx = std::max(mx, x);
  double sum = 0.0;
  for (double x : logits.v) sum += std::exp(x - mx);
  const double lse = mx + std::log(sum);
  std::vector<double> out(logits.v.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = logits.v[i] - lse;
  return out;
}

}  // namespace

DiffValue cross_entropy(Tape& tape, DiffValue logits, int answer_id) {
  const Tensor& s = logits.value();
  if (s.shape.size() != 1) throw ShapeMismatch("cross_entropy: logits must be 1-d");
  if (answer_id < 0 || answer_id >= static_cast<int>(s.numel()))
    throw InvalidLabel("cross_entropy: answer id " + std::to_string(answer_id) +
                       " out of range for " + std::to_string(s.numel()) + " classes");
  const std::vector<double> lp = log_softmax(s);
  const double loss = -lp[static_cast<size_t>(answer_id)];
  return tape.make_node(
      Tensor::scalar(loss), {logits.id},
      [sid = logits.id, answer_id, lp](Tape& t, int self) {
        const double g = t.grad(self).v[0];
        Tensor& gs = t.grad(sid);
        for (size_t k = 0; k < gs.v.size(); ++k) {
          const double p = std::exp(lp[k]);
          gs.v[k] += g * (p - (static_cast<int>(k) == answer_id ? 1.0 : 0.0));
        }
      });
}

DiffValue kl_divergence(Tape& tape, DiffValue s1, DiffValue s2, bool stop_grad_s1,
                        bool stop_grad_s2) {
  const Tensor& a = s1.value();
  const Tensor& b = s2.value();
  if (!a.same_shape(b)) throw ShapeMismatch("kl_divergence: logit shapes differ");
  const std::vector<double> lp1 = log_softmax(a);
  const std::vector<double> lp2 = log_softmax(b);
  double kl = 0.0;
  for (size_t k = 0; k < lp1.size(); ++k) kl += std::exp(lp1[k]) * (lp1[k] - lp2[k]);
  return tape.make_node(
      Tensor::scalar(kl), {s1.id, s2.id},
      [s1id = s1.id, s2id = s2.id, lp1, lp2, kl, stop_grad_s1, stop_grad_s2](Tape& t,
                                                                             int self) {
        const double g = t.grad(self).v[0];
        if (!stop_grad_s1) {
          Tensor& g1 = t.grad(s1id);
          for (size_t k = 0; k < g1.v.size(); ++k)
            g1.v[k] += g * std::exp(lp1[k]) * ((lp1[k] - lp2[k]) - kl);
        }
        if (!stop_grad_s2) {
          Tensor& g2 = t.grad(s2id);
          for (size_t k = 0; k < g2.v.size(); ++k)
            g2.v[k] += g * (std::exp(lp2[k]) - std::exp(lp1[k]));
        }
      });
}

LossBreakdown total_loss(Tape& tape, DiffValue s1, DiffValue s2, int answer_id,
                         double lambda, double beta, bool kl_stop_grad_s1) {
  const DiffValue one_s1[] = {s1};
  const DiffValue one_s2[] = {s2};
  const int one_answer[] = {answer_id};
  return total_loss_batch(tape, one_s1, s2.valid() ? std::span<const DiffValue>(one_s2)
                                                   : std::span<const DiffValue>(),
                          one_answer, lambda, beta, kl_stop_grad_s1);
}

LossBreakdown total_loss_batch(Tape& tape, std::span<const DiffValue> s1,
                               std::span<const DiffValue> s2,
                               std::span<const int> answer_ids, double lambda,
                               double beta, bool kl_stop_grad_s1) {
  if (lambda < 0.0 || beta < 0.0) throw Error("lambda and beta must be >= 0");
  if (s1.empty() || s1.size() != answer_ids.size())
    throw ShapeMismatch("total_loss: batch arity mismatch");
  const bool adversarial = !s2.empty();
  if (adversarial && s2.size() != s1.size())
    throw ShapeMismatch("total_loss: branch arity mismatch");

  std::vector<DiffValue> ce1, ce2, kls;
  ce1.reserve(s1.size());
  for (size_t i = 0; i < s1.size(); ++i) {
    ce1.push_back(cross_entropy(tape, s1[i], answer_ids[i]));
    if (adversarial) {
      ce2.push_back(cross_entropy(tape, s2[i], answer_ids[i]));
      kls.push_back(kl_divergence(tape, s1[i], s2[i], kl_stop_grad_s1));
    }
  }

  LossBreakdown out;
  out.lambda = lambda;
  out.beta = beta;
  DiffValue l1 = tape.scalar_mean(ce1);
  out.l1 = l1.value().v[0];
  if (!adversarial) {
    out.total_node = l1;
    out.total = out.l1;
    return out;
  }
  DiffValue l_adv = tape.scalar_mean(ce2);
  DiffValue l2 = tape.scalar_mean(kls);
  out.l_adv = l_adv.value().v[0];
  out.l2 = l2.value().v[0];
  const DiffValue terms[] = {l1, l_adv, l2};
  const double coeffs[] = {1.0, beta, lambda};
  out.total_node = tape.scalar_combine(terms, coeffs);
  out.total = out.total_node.value().v[0];
  return out;
}

}  // namespace dbvqa
