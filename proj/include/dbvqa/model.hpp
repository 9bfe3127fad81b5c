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

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dbvqa/autodiff.hpp"
#include "dbvqa/datagen.hpp"
#include "dbvqa/rng.hpp"
#include "dbvqa/tensor.hpp"

namespace dbvqa {

/// Shape hyperparameters of the two-branch network.
struct ModelConfig {
  int image_size = 32;
  int embed_dim = 32;
  int hidden_dim = 64;
  std::array<int, 2> conv_channels{8, 16};
  int vocab_size = 0;    // question vocabulary size
  int answer_count = 0;  // answer vocabulary size
  double grl_alpha = 1.0;
  std::array<double, 2> crop_fraction_range{0.2, 0.5};

  /// Dimensions entering the visual encoder's final linear layer.
  int conv_flat_dim() const {
    const int side = image_size / 4;
    return conv_channels[1] * side * side;
  }

  void validate() const;

  /// Defaults wired to the synthetic dataset's vocabularies.
  static ModelConfig desk_default();
};

/// All learnable tensors, in a fixed named order. The order defines
/// checkpoint layout and gradient accumulation order.
struct ModelParams {
  struct Entry {
    std::string name;
    Tensor tensor;
  };
  std::vector<Entry> entries;

  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  int index_of(const std::string& name) const;  // -1 if absent
  int64_t total_scalars() const;
  bool all_finite() const;
};

/// Seed-derived initialization: uniform fan-in scaling for weights, zeros
/// for biases.
ModelParams init_params(const ModelConfig& config, uint64_t seed);

/// Recovers the shape hyperparameters from a parameter set (used when a
/// checkpoint is loaded without its originating config).
ModelConfig config_from_params(const ModelParams& params);

/// Replaces the image with a random patch resized back to full size by
/// nearest neighbor. Side fractions are drawn uniformly from crop_range,
/// then a uniform top-left corner. Deterministic given the Rng state.
ImageU8 random_crop(const ImageU8& image, const std::array<double, 2>& crop_range,
                    Rng& rng);

/// One forward computation over a Tape. Parameters are pushed as leaves on
/// construction, so both branches of a training step share the identical
/// parameter nodes.
class ModelGraph {
 public:
  ModelGraph(Tape& tape, const ModelConfig& config, const ModelParams& params);

  /// I = f(x): conv, tanh, pool, conv, tanh, pool, flatten, linear.
  DiffValue encode_image(const ImageU8& image);
  /// Q = r(q): embedding plus a single tanh recurrent layer; final state.
  DiffValue encode_question(std::span<const int> tokens);
  /// F = m(I, Q): tanh of the elementwise product of two projections.
  DiffValue fuse(DiffValue visual, DiffValue question);
  /// s1 = h1(F), s2 = h2(F): two-layer classifiers.
  DiffValue head1(DiffValue fused);
  DiffValue head2(DiffValue fused);

  struct TrainForward {
    DiffValue s1, s2, fused1, fused2;
  };

  /// Both branches: s1 = h1(m(f(x), r(q))),
  /// s2 = h2(grad_reverse(m(f(g(x)), r(q)), alpha)).
  /// apply_grl = false is a test hook that drops the reversal node.
  TrainForward forward_train(const ImageU8& image, std::span<const int> tokens,
                             Rng& crop_rng, bool apply_grl = true);

  /// Original branch only; independent of h2, the crop, and alpha.
  DiffValue forward_infer(const ImageU8& image, std::span<const int> tokens);

  /// Parameter leaf for entry i of the bound ModelParams.
  DiffValue param_node(int i) const { return param_nodes_[static_cast<size_t>(i)]; }
  int param_count() const { return static_cast<int>(param_nodes_.size()); }

  const ModelConfig& config() const { return config_; }

 private:
  DiffValue p(const std::string& name) const;

  Tape& tape_;
  ModelConfig config_;
  std::vector<DiffValue> param_nodes_;
  std::vector<std::string> param_names_;
};

int argmax(std::span<const double> v);

}  // namespace dbvqa
