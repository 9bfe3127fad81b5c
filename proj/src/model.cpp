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

#include "dbvqa/model.hpp"

#include <cmath>

#include "dbvqa/errors.hpp"

namespace dbvqa {

void ModelConfig::validate() const {
  if (image_size < 4 || image_size % 4 != 0)
    throw Error("image_size must be a positive multiple of 4");
  if (embed_dim < 1 || hidden_dim < 1 || conv_channels[0] < 1 || conv_channels[1] < 1)
    throw Error("all dimensions must be >= 1");
  if (vocab_size < 1 || answer_count < 2)
    throw Error("vocab_size and answer_count must be set");
  if (!(crop_fraction_range[0] > 0.0) || crop_fraction_range[0] > crop_fraction_range[1] ||
      crop_fraction_range[1] > 1.0)
    throw Error("crop_fraction_range must satisfy 0 < lo <= hi <= 1");
  if (grl_alpha < 0.0) throw Error("grl_alpha must be >= 0");
}

ModelConfig ModelConfig::desk_default() {
  ModelConfig c;
  c.vocab_size = static_cast<int>(question_vocabulary().size());
  c.answer_count = AnswerVocabulary::instance().size();
  return c;
}

Tensor& ModelParams::at(const std::string& name) {
  for (auto& e : entries)
    if (e.name == name) return e.tensor;
  throw Error("unknown parameter: " + name);
}

const Tensor& ModelParams::at(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return e.tensor;
  throw Error("unknown parameter: " + name);
}

int ModelParams::index_of(const std::string& name) const {
  for (size_t i = 0; i < entries.size(); ++i)
    if (entries[i].name == name) return static_cast<int>(i);
  return -1;
}

int64_t ModelParams::total_scalars() const {
  int64_t n = 0;
  for (const auto& e : entries) n += e.tensor.numel();
  return n;
}

bool ModelParams::all_finite() const {
  for (const auto& e : entries)
    if (!e.tensor.all_finite()) return false;
  return true;
}

namespace {

Tensor uniform_fan_in(Rng& rng, std::vector<int> shape, int fan_in) {
  Tensor t(std::move(shape));
  // LeCun-uniform: variance 1/fan_in
  const double bound = std::sqrt(3.0 / static_cast<double>(fan_in));
  for (double& x : t.v) x = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

ModelParams init_params(const ModelConfig& config, uint64_t seed) {
  config.validate();
  Rng rng(mix64(seed, 0x1417u));
  const int c1 = config.conv_channels[0];
  const int c2 = config.conv_channels[1];
  const int hid = config.hidden_dim;
  const int emb = config.embed_dim;
  const int flat = config.conv_flat_dim();

  ModelParams p;
  auto weight = [&](const std::string& name, std::vector<int> shape, int fan_in) {
    p.entries.push_back({name, uniform_fan_in(rng, std::move(shape), fan_in)});
  };
  auto bias = [&](const std::string& name, int n) {
    p.entries.push_back({name, Tensor::zeros({n})});
  };

  weight("f.conv1.w", {c1, 3, 3, 3}, 3 * 9);
  bias("f.conv1.b", c1);
  weight("f.conv2.w", {c2, c1, 3, 3}, c1 * 9);
  bias("f.conv2.b", c2);
  weight("f.fc.w", {hid, flat}, flat);
  bias("f.fc.b", hid);
  weight("r.embed", {config.vocab_size, emb}, emb);
  weight("r.wx", {hid, emb}, emb);
  weight("r.wh", {hid, hid}, hid);
  bias("r.b", hid);
  weight("m.proj_img.w", {hid, hid}, hid);
  weight("m.proj_q.w", {hid, hid}, hid);
  for (const char* head : {"h1", "h2"}) {
    const std::string h(head);
    weight(h + ".fc1.w", {hid, hid}, hid);
    bias(h + ".fc1.b", hid);
    weight(h + ".fc2.w", {config.answer_count, hid}, hid);
    bias(h + ".fc2.b", config.answer_count);
  }
  return p;
}

ModelConfig config_from_params(const ModelParams& params) {
  ModelConfig c;
  const Tensor& conv1 = params.at("f.conv1.w");
  const Tensor& conv2 = params.at("f.conv2.w");
  const Tensor& fc = params.at("f.fc.w");
  const Tensor& embed = params.at("r.embed");
  const Tensor& h1_out = params.at("h1.fc2.w");
  c.conv_channels = {conv1.shape[0], conv2.shape[0]};
  c.hidden_dim = fc.shape[0];
  const int flat = fc.shape[1];
  const int side = static_cast<int>(std::lround(
      std::sqrt(static_cast<double>(flat) / c.conv_channels[1])));
  c.image_size = side * 4;
  c.vocab_size = embed.shape[0];
  c.embed_dim = embed.shape[1];
  c.answer_count = h1_out.shape[0];
  if (c.conv_flat_dim() != flat) throw CorruptCheckpoint("inconsistent parameter shapes");
  return c;
}

ImageU8 random_crop(const ImageU8& image, const std::array<double, 2>& crop_range,
                    Rng& rng) {
  const double fh = rng.uniform(crop_range[0], crop_range[1]);
  const double fw = rng.uniform(crop_range[0], crop_range[1]);
  const int ch = std::clamp(static_cast<int>(std::lround(fh * image.h)), 1, image.h);
  const int cw = std::clamp(static_cast<int>(std::lround(fw * image.w)), 1, image.w);
  const int top = static_cast<int>(rng.below(static_cast<uint64_t>(image.h - ch + 1)));
  const int left = static_cast<int>(rng.below(static_cast<uint64_t>(image.w - cw + 1)));

  ImageU8 out;
  out.h = image.h;
  out.w = image.w;
  out.rgb.resize(image.rgb.size());
  // nearest-neighbor resize of the patch back to full resolution
  for (int y = 0; y < out.h; ++y) {
    const int sy = top + static_cast<int>((static_cast<int64_t>(y) * 2 + 1) * ch / (2 * out.h));
    for (int x = 0; x < out.w; ++x) {
      const int sx = left + static_cast<int>((static_cast<int64_t>(x) * 2 + 1) * cw / (2 * out.w));
      const uint8_t* src = image.pixel(sy, sx);
      uint8_t* dst = out.pixel(y, x);
      dst[0] = src[0];
      dst[1] = src[1];
      dst[2] = src[2];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// ModelGraph
// ---------------------------------------------------------------------------

ModelGraph::ModelGraph(Tape& tape, const ModelConfig& config, const ModelParams& params)
    : tape_(tape), config_(config) {
  config_.validate();
  param_nodes_.reserve(params.entries.size());
  for (const auto& e : params.entries) {
    param_nodes_.push_back(tape_.leaf(e.tensor));
    param_names_.push_back(e.name);
  }
}

DiffValue ModelGraph::p(const std::string& name) const {
  for (size_t i = 0; i < param_names_.size(); ++i)
    if (param_names_[i] == name) return param_nodes_[i];
  throw Error("unknown parameter: " + name);
}

DiffValue ModelGraph::encode_image(const ImageU8& image) {
  if (image.h != config_.image_size || image.w != config_.image_size ||
      image.rgb.size() != static_cast<size_t>(image.h) * image.w * 3)
    throw ShapeMismatch("encode_image: image dims differ from config");
  // scale to [0,1], channels-first
  const int S = config_.image_size;
  Tensor x({3, S, S});
  for (int y = 0; y < S; ++y)
    for (int xx = 0; xx < S; ++xx) {
      const uint8_t* px = image.pixel(y, xx);
      for (int c = 0; c < 3; ++c)
        x.v[(static_cast<size_t>(c) * S + y) * S + xx] = px[c] / 255.0;
    }
  DiffValue h = tape_.leaf(std::move(x));
  h = tape_.conv2d_3x3(h, p("f.conv1.w"), p("f.conv1.b"));
  h = tape_.tanh_op(h);
  h = tape_.avgpool2(h);
  h = tape_.conv2d_3x3(h, p("f.conv2.w"), p("f.conv2.b"));
  h = tape_.tanh_op(h);
  h = tape_.avgpool2(h);
  h = tape_.flatten(h);
  return tape_.linear(h, p("f.fc.w"), p("f.fc.b"));
}

DiffValue ModelGraph::encode_question(std::span<const int> tokens) {
  if (tokens.empty()) throw ShapeMismatch("encode_question: empty token list");
  for (int t : tokens)
    if (t < 0 || t >= config_.vocab_size)
      throw UnknownToken("token id out of vocabulary: " + std::to_string(t));
  DiffValue h = tape_.leaf(Tensor::zeros({config_.hidden_dim}));
  for (int t : tokens) {
    DiffValue e = tape_.embed_row(p("r.embed"), t);
    h = tape_.rnn_step(e, h, p("r.wx"), p("r.wh"), p("r.b"));
  }
  return h;
}

DiffValue ModelGraph::fuse(DiffValue visual, DiffValue question) {
  if (visual.value().numel() != config_.hidden_dim ||
      question.value().numel() != config_.hidden_dim)
    throw ShapeMismatch("fuse: inputs must be hidden_dim vectors");
  DiffValue pi = tape_.matvec(visual, p("m.proj_img.w"));
  DiffValue pq = tape_.matvec(question, p("m.proj_q.w"));
  return tape_.tanh_op(tape_.mul(pi, pq));
}

DiffValue ModelGraph::head1(DiffValue fused) {
  DiffValue h = tape_.tanh_op(tape_.linear(fused, p("h1.fc1.w"), p("h1.fc1.b")));
  return tape_.linear(h, p("h1.fc2.w"), p("h1.fc2.b"));
}

DiffValue ModelGraph::head2(DiffValue fused) {
  DiffValue h = tape_.tanh_op(tape_.linear(fused, p("h2.fc1.w"), p("h2.fc1.b")));
  return tape_.linear(h, p("h2.fc2.w"), p("h2.fc2.b"));
}

ModelGraph::TrainForward ModelGraph::forward_train(const ImageU8& image,
                                                   std::span<const int> tokens,
                                                   Rng& crop_rng, bool apply_grl) {
  TrainForward out;
  DiffValue q = encode_question(tokens);
  DiffValue vis = encode_image(image);
  out.fused1 = fuse(vis, q);
  out.s1 = head1(out.fused1);

  const ImageU8 cropped = random_crop(image, config_.crop_fraction_range, crop_rng);
  DiffValue vis_crop = encode_image(cropped);
  out.fused2 = fuse(vis_crop, q);
  DiffValue adv_in =
      apply_grl ? tape_.grad_reverse(out.fused2, config_.grl_alpha) : out.fused2;
  out.s2 = head2(adv_in);
  return out;
}

DiffValue ModelGraph::forward_infer(const ImageU8& image, std::span<const int> tokens) {
  DiffValue q = encode_question(tokens);
  DiffValue vis = encode_image(image);
  return head1(fuse(vis, q));
}

int argmax(std::span<const double> v) {
  int best = 0;
  for (size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[static_cast<size_t>(best)]) best = static_cast<int>(i);
  return best;
}

}  // namespace dbvqa
