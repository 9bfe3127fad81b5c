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

#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "dbvqa/tensor.hpp"

namespace dbvqa {

class Tape;

/// Handle to a node on a Tape: an n-d value participating in reverse-mode
/// differentiation. grad() is valid after Tape::backward and has exactly
/// the shape of value(); the reverse pass accumulates (sums) into it.
struct DiffValue {
  Tape* tape = nullptr;
  int id = -1;

  const Tensor& value() const;
  const Tensor& grad() const;
  bool valid() const { return tape != nullptr && id >= 0; }
};

/// Append-only computation graph. Nodes are created in topological order
/// (parents always precede children), so the reverse pass is a single
/// backward sweep over node ids. Node storage is a deque: references into
/// existing nodes stay valid while new nodes are appended. Single-threaded
/// by construction; reset() recycles storage between training steps.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily by backward()
    std::vector<int> parents;
    BackwardFn backward;  // empty for leaves
  };

  DiffValue leaf(Tensor value) { return make_node(std::move(value), {}, {}); }

  DiffValue make_node(Tensor value, std::vector<int> parents, BackwardFn fn) {
    nodes_.push_back(Node{std::move(value), Tensor{}, std::move(parents), std::move(fn)});
    return DiffValue{this, static_cast<int>(nodes_.size()) - 1};
  }

  const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }
  Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }

  const Tensor& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  Tensor& grad(int id) { return nodes_[static_cast<size_t>(id)].grad; }

  size_t size() const { return nodes_.size(); }

  /// Reverse sweep from a scalar root: seeds d(root)/d(root) = 1 and
  /// accumulates into every reachable node's grad.
  void backward(const DiffValue& root);

  void reset() { nodes_.clear(); }

  // ---- differentiable operations ------------------------------------

  /// y = W x + b. W is [out, in] row-major, x is [in], b is [out].
  DiffValue linear(DiffValue x, DiffValue w, DiffValue b);

  /// y = W x (bias-free projection).
  DiffValue matvec(DiffValue x, DiffValue w);

  /// 2-d convolution, 3x3 kernel, stride 1, zero padding 1.
  /// x is [C, H, W], w is [O, C, 3, 3], b is [O]; output [O, H, W].
  DiffValue conv2d_3x3(DiffValue x, DiffValue w, DiffValue b);

  /// 2x2 average pooling, stride 2. Input dims must be even.
  DiffValue avgpool2(DiffValue x);

  /// Flatten to a vector view (copy with 1-d shape).
  DiffValue flatten(DiffValue x);

  DiffValue tanh_op(DiffValue x);

  /// Elementwise product.
  DiffValue mul(DiffValue a, DiffValue b);

  /// One recurrent step: h = tanh(Wx e + Wh h_prev + b).
  DiffValue rnn_step(DiffValue e, DiffValue h_prev, DiffValue wx, DiffValue wh,
                     DiffValue b);

  /// Row lookup into an embedding table [V, E].
  DiffValue embed_row(DiffValue table, int row);

  /// Gradient reversal: identity forward, multiplies the upstream gradient
  /// by -alpha in the reverse pass.
  DiffValue grad_reverse(DiffValue x, double alpha);

  /// z = sum_i coeff[i] * x[i] over scalar nodes.
  DiffValue scalar_combine(std::span<const DiffValue> xs,
                           std::span<const double> coeffs);

  /// Mean of scalar nodes: (1/n) * sum_i x[i].
  DiffValue scalar_mean(std::span<const DiffValue> xs);

 private:
  std::deque<Node> nodes_;
};

inline const Tensor& DiffValue::value() const { return tape->value(id); }
inline const Tensor& DiffValue::grad() const { return tape->node(id).grad; }

}  // namespace dbvqa
