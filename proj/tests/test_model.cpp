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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dbvqa/errors.hpp"
#include "dbvqa/model.hpp"
#include "dbvqa/objective.hpp"

using namespace dbvqa;

namespace {

ModelConfig mini_config() {
  ModelConfig c;
  c.image_size = 8;
  c.embed_dim = 4;
  c.hidden_dim = 4;
  c.conv_channels = {2, 3};
  c.vocab_size = 8;
  c.answer_count = 8;
  return c;
}

ImageU8 random_image(int size, Rng& rng) {
  ImageU8 img;
  img.h = img.w = size;
  img.rgb.resize(static_cast<size_t>(size) * size * 3);
  for (auto& b : img.rgb) b = static_cast<uint8_t>(rng.below(256));
  return img;
}

ImageU8 uniform_image(int size, uint8_t r, uint8_t g, uint8_t b) {
  ImageU8 img;
  img.h = img.w = size;
  img.rgb.resize(static_cast<size_t>(size) * size * 3);
  for (size_t i = 0; i < img.rgb.size(); i += 3) {
    img.rgb[i] = r;
    img.rgb[i + 1] = g;
    img.rgb[i + 2] = b;
  }
  return img;
}

// Total training loss of one sample as a plain function of parameters; the
// crop stream is re-seeded every call so the forward stays frozen. The
// reversal layer is dropped: it intentionally decouples the reverse pass
// from the true derivative, so finite differences validate the identity-GRL
// composition while the -alpha factor is checked exactly elsewhere.
double loss_at(const ModelConfig& config, const ModelParams& params, const ImageU8& img,
               const std::vector<int>& tokens, int answer, double lambda, double beta,
               uint64_t crop_seed) {
  Tape tape;
  ModelGraph graph(tape, config, params);
  Rng crop_rng(crop_seed);
  auto fwd = graph.forward_train(img, tokens, crop_rng, /*apply_grl=*/false);
  return total_loss(tape, fwd.s1, fwd.s2, answer, lambda, beta).total;
}

}  // namespace

TEST_CASE("encode_image shape contract and zero propagation") {
  const ModelConfig config = mini_config();
  const ModelParams params = init_params(config, 5);
  Tape tape;
  ModelGraph graph(tape, config, params);
  Rng rng(1);

  const ImageU8 img = random_image(8, rng);
  DiffValue feat = graph.encode_image(img);
  CHECK(feat.value().numel() == config.hidden_dim);

  // batch of B images -> B x hidden_dim
  for (int b = 0; b < 3; ++b) {
    DiffValue f = graph.encode_image(random_image(8, rng));
    CHECK(f.value().numel() == config.hidden_dim);
  }

  // all-zero image with the zero-initialized biases gives the zero vector
  DiffValue z = graph.encode_image(uniform_image(8, 0, 0, 0));
  for (double x : z.value().v) CHECK(x == 0.0);

  ImageU8 wrong = random_image(16, rng);
  CHECK_THROWS_AS(graph.encode_image(wrong), ShapeMismatch);
}

TEST_CASE("encode_image is deterministic given params") {
  const ModelConfig config = mini_config();
  const ModelParams params = init_params(config, 6);
  Rng rng(2);
  const ImageU8 img = random_image(8, rng);
  Tape t1, t2;
  ModelGraph g1(t1, config, params), g2(t2, config, params);
  CHECK(g1.encode_image(img).value().v == g2.encode_image(img).value().v);
}

TEST_CASE("encode_question: unrolling, determinism, errors") {
  const ModelConfig config = mini_config();
  const ModelParams params = init_params(config, 7);
  Tape tape;
  ModelGraph graph(tape, config, params);

  SUBCASE("single token equals one recurrent step from the zero state") {
    const std::vector<int> tokens = {3};
    DiffValue q = graph.encode_question(tokens);
    // manual step: h = tanh(Wx e + 0 + b)
    const Tensor& wx = params.at("r.wx");
    const Tensor& emb = params.at("r.embed");
    const Tensor& b = params.at("r.b");
    for (int o = 0; o < config.hidden_dim; ++o) {
      double acc = b.v[static_cast<size_t>(o)];
      for (int i = 0; i < config.embed_dim; ++i)
        acc += wx.v[static_cast<size_t>(o) * config.embed_dim + i] *
               emb.v[static_cast<size_t>(3) * config.embed_dim + i];
      CHECK(q.value().v[static_cast<size_t>(o)] == doctest::Approx(std::tanh(acc)).epsilon(1e-15));
    }
  }
  SUBCASE("identical token lists give identical outputs") {
    const std::vector<int> tokens = {1, 4, 2, 2, 7};
    CHECK(graph.encode_question(tokens).value().v ==
          graph.encode_question(tokens).value().v);
  }
  SUBCASE("order sensitivity: permuting tokens changes the encoding") {
    const std::vector<int> a = {1, 4, 2};
    const std::vector<int> b = {2, 4, 1};
    CHECK(graph.encode_question(a).value().v != graph.encode_question(b).value().v);
  }
  SUBCASE("out-of-vocabulary and empty input throw") {
    const std::vector<int> bad = {1, 99};
    CHECK_THROWS_AS(graph.encode_question(bad), UnknownToken);
    CHECK_THROWS_AS(graph.encode_question(std::vector<int>{}), ShapeMismatch);
  }
}

TEST_CASE("fuse: multiplicative annihilation and branch disagreement") {
  const ModelConfig config = mini_config();
  const ModelParams params = init_params(config, 8);
  Tape tape;
  ModelGraph graph(tape, config, params);
  Rng rng(3);

  DiffValue q = graph.encode_question(std::vector<int>{1, 2});
  DiffValue zero_vis = tape.leaf(Tensor::zeros({config.hidden_dim}));
  DiffValue fused = graph.fuse(zero_vis, q);
  for (double x : fused.value().v) CHECK(x == 0.0);

  // distinct visual inputs give distinct fused outputs at random init
  DiffValue v1 = graph.encode_image(random_image(8, rng));
  DiffValue v2 = graph.encode_image(random_image(8, rng));
  CHECK(graph.fuse(v1, q).value().v != graph.fuse(v2, q).value().v);

  DiffValue wrong = tape.leaf(Tensor::zeros({config.hidden_dim + 1}));
  CHECK_THROWS_AS(graph.fuse(wrong, q), ShapeMismatch);
}

TEST_CASE("random_crop: identity, color invariance, determinism") {
  Rng rng(11);
  const ImageU8 img = random_image(32, rng);
  SUBCASE("crop range [1,1] is the identity") {
    Rng r(5);
    CHECK(random_crop(img, {1.0, 1.0}, r) == img);
  }
  SUBCASE("uniform-color images are invariant") {
    const ImageU8 flat = uniform_image(32, 17, 200, 9);
    Rng r(6);
    CHECK(random_crop(flat, {0.2, 0.5}, r) == flat);
  }
  SUBCASE("fixed rng state repeats bit-identically") {
    Rng r1(7), r2(7);
    CHECK(random_crop(img, {0.2, 0.5}, r1) == random_crop(img, {0.2, 0.5}, r2));
  }
  SUBCASE("crops differ across draws") {
    Rng r(8);
    const ImageU8 a = random_crop(img, {0.2, 0.5}, r);
    const ImageU8 b = random_crop(img, {0.2, 0.5}, r);
    CHECK(!(a == b));
  }
}

TEST_CASE("forward_train: shapes, branch coincidence") {
  ModelConfig config = mini_config();
  const ModelParams params = init_params(config, 9);
  Rng rng(4);
  const ImageU8 img = random_image(8, rng);
  const std::vector<int> tokens = {0, 5, 3};

  SUBCASE("logit lengths match answer_count") {
    Tape tape;
    ModelGraph graph(tape, config, params);
    Rng crop_rng(1);
    auto fwd = graph.forward_train(img, tokens, crop_rng);
    CHECK(fwd.s1.value().numel() == config.answer_count);
    CHECK(fwd.s2.value().numel() == config.answer_count);
  }
  SUBCASE("identity crop plus h2 copied from h1 makes s1 == s2") {
    config.crop_fraction_range = {1.0, 1.0};
    ModelParams twinned = params;
    for (const char* leaf : {".fc1.w", ".fc1.b", ".fc2.w", ".fc2.b"})
      twinned.at(std::string("h2") + leaf) = twinned.at(std::string("h1") + leaf);
    Tape tape;
    ModelGraph graph(tape, config, twinned);
    Rng crop_rng(2);
    auto fwd = graph.forward_train(img, tokens, crop_rng);
    CHECK(fwd.s1.value().v == fwd.s2.value().v);
    CHECK(fwd.fused1.value().v == fwd.fused2.value().v);
  }
}

TEST_CASE("forward_infer: branch isolation and shared path") {
  const ModelConfig config = mini_config();
  const ModelParams params = init_params(config, 10);
  Rng rng(5);
  const ImageU8 img = random_image(8, rng);
  const std::vector<int> tokens = {2, 2, 6};

  Tape tape;
  ModelGraph graph(tape, config, params);
  const std::vector<double> s1 = graph.forward_infer(img, tokens).value().v;

  SUBCASE("randomizing h2 leaves forward_infer bit-identical") {
    ModelParams scrambled = params;
    Rng prng(99);
    for (const char* leaf : {".fc1.w", ".fc1.b", ".fc2.w", ".fc2.b"}) {
      Tensor& t = scrambled.at(std::string("h2") + leaf);
      for (double& x : t.v) x = prng.uniform(-1.0, 1.0);
    }
    Tape t2;
    ModelGraph g2(t2, config, scrambled);
    CHECK(g2.forward_infer(img, tokens).value().v == s1);
  }
  SUBCASE("alpha and crop range do not affect inference") {
    ModelConfig c2 = config;
    c2.grl_alpha = 17.0;
    c2.crop_fraction_range = {0.9, 1.0};
    Tape t2;
    ModelGraph g2(t2, c2, params);
    CHECK(g2.forward_infer(img, tokens).value().v == s1);
  }
  SUBCASE("forward_infer equals the s1 component of forward_train") {
    Tape t2;
    ModelGraph g2(t2, config, params);
    Rng crop_rng(3);
    auto fwd = g2.forward_train(img, tokens, crop_rng);
    CHECK(fwd.s1.value().v == s1);
  }
  SUBCASE("argmax is invariant to adding a constant to all logits") {
    std::vector<double> shifted = s1;
    for (double& x : shifted) x += 123.456;
    CHECK(argmax(shifted) == argmax(s1));
  }
}

TEST_CASE("GRL exactness: adversarial-path gradients scale by -alpha") {
  for (double alpha : {0.5, 1.0}) {
    ModelConfig config = mini_config();
    config.grl_alpha = alpha;
    const ModelParams params = init_params(config, 12);
    Rng rng(6);
    const ImageU8 img = random_image(8, rng);
    const std::vector<int> tokens = {1, 3, 3, 0};
    const int answer = 4;

    auto run = [&](bool with_grl) {
      Tape tape;
      ModelGraph graph(tape, config, params);
      Rng crop_rng(17);
      auto fwd = graph.forward_train(img, tokens, crop_rng, with_grl);
      DiffValue adv_loss = cross_entropy(tape, fwd.s2, answer);
      tape.backward(adv_loss);
      std::vector<Tensor> grads;
      for (int i = 0; i < graph.param_count(); ++i)
        grads.push_back(graph.param_node(i).grad());
      return grads;
    };
    const std::vector<Tensor> with = run(true);
    const std::vector<Tensor> without = run(false);

    for (size_t i = 0; i < params.entries.size(); ++i) {
      const std::string& name = params.entries[i].name;
      const bool shared = name[0] == 'f' || name[0] == 'r' || name[0] == 'm';
      const bool h2 = name.rfind("h2", 0) == 0;
      for (size_t k = 0; k < with[i].v.size(); ++k) {
        CAPTURE(name);
        if (shared) {
          CHECK(with[i].v[k] == -alpha * without[i].v[k]);  // exact
        } else if (h2) {
          CHECK(with[i].v[k] == without[i].v[k]);  // downstream of the reversal
        } else {
          CHECK(with[i].v[k] == 0.0);  // h1 is not on the adversarial path
        }
      }
    }
  }
}

TEST_CASE("full-model gradients match central finite differences") {
  const ModelConfig config = mini_config();
  ModelParams params = init_params(config, 13);
  Rng rng(7);
  const ImageU8 img = random_image(8, rng);
  const std::vector<int> tokens = {0, 1, 2, 3};
  const int answer = 2;
  const double lambda = 0.1, beta = 1.0;
  const uint64_t crop_seed = 101;

  Tape tape;
  ModelGraph graph(tape, config, params);
  Rng crop_rng(crop_seed);
  auto fwd = graph.forward_train(img, tokens, crop_rng, /*apply_grl=*/false);
  LossBreakdown loss = total_loss(tape, fwd.s1, fwd.s2, answer, lambda, beta);
  tape.backward(loss.total_node);

  const double eps = 1e-5;
  int checked = 0;
  for (size_t i = 0; i < params.entries.size(); ++i) {
    Tensor& t = params.entries[i].tensor;
    for (size_t k = 0; k < t.v.size(); ++k) {
      const double saved = t.v[k];
      t.v[k] = saved + eps;
      const double up = loss_at(config, params, img, tokens, answer, lambda, beta, crop_seed);
      t.v[k] = saved - eps;
      const double down = loss_at(config, params, img, tokens, answer, lambda, beta, crop_seed);
      t.v[k] = saved;
      const double fd = (up - down) / (2 * eps);
      const double ad = graph.param_node(static_cast<int>(i)).grad().v[k];
      if (std::abs(fd) < 1e-12 && std::abs(ad) < 1e-12) continue;  // flat direction
      const double rel = std::abs(fd - ad) / std::max(std::abs(fd), std::abs(ad));
      CAPTURE(params.entries[i].name);
      CAPTURE(k);
      CHECK(rel <= 1e-4);
      ++checked;
    }
  }
  CHECK(checked > 300);  // nearly every parameter participates
}

TEST_CASE("gradient decomposition across the reversal layer") {
  // The total-loss gradient on shared parameters decomposes into the plain
  // L1 and s1-side KL parts minus alpha times the no-GRL adversarial parts.
  const double alpha = 1.0, lambda = 0.1, beta = 1.0;
  ModelConfig config = mini_config();
  config.grl_alpha = alpha;
  const ModelParams params = init_params(config, 14);
  Rng rng(8);
  const ImageU8 img = random_image(8, rng);
  const std::vector<int> tokens = {5, 1};
  const int answer = 1;

  // graph A: production objective with the GRL active
  Tape tape_a;
  ModelGraph graph_a(tape_a, config, params);
  Rng crop_a(55);
  auto fwd_a = graph_a.forward_train(img, tokens, crop_a);
  LossBreakdown loss = total_loss(tape_a, fwd_a.s1, fwd_a.s2, answer, lambda, beta);
  tape_a.backward(loss.total_node);
  std::vector<Tensor> g_total;
  for (int i = 0; i < graph_a.param_count(); ++i)
    g_total.push_back(graph_a.param_node(i).grad());

  // graph B: same frozen forward with the reversal disabled; each term
  // backpropagated in isolation
  Tape tape_b;
  ModelGraph graph_b(tape_b, config, params);
  Rng crop_b(55);
  auto fwd_b = graph_b.forward_train(img, tokens, crop_b, /*apply_grl=*/false);
  REQUIRE(fwd_a.s2.value().v == fwd_b.s2.value().v);  // GRL is identity forward

  DiffValue l1 = cross_entropy(tape_b, fwd_b.s1, answer);
  DiffValue l_adv = cross_entropy(tape_b, fwd_b.s2, answer);
  DiffValue kl_s1 = kl_divergence(tape_b, fwd_b.s1, fwd_b.s2, false, true);
  DiffValue kl_s2 = kl_divergence(tape_b, fwd_b.s1, fwd_b.s2, true, false);

  auto grads_of = [&](DiffValue root) {
    tape_b.backward(root);
    std::vector<Tensor> out;
    for (int i = 0; i < graph_b.param_count(); ++i)
      out.push_back(graph_b.param_node(i).grad());
    return out;
  };
  const std::vector<Tensor> g_l1 = grads_of(l1);
  const std::vector<Tensor> g_adv = grads_of(l_adv);
  const std::vector<Tensor> g_kl1 = grads_of(kl_s1);
  const std::vector<Tensor> g_kl2 = grads_of(kl_s2);

  for (size_t i = 0; i < params.entries.size(); ++i) {
    const std::string& name = params.entries[i].name;
    const bool shared = name[0] == 'f' || name[0] == 'r' || name[0] == 'm';
    for (size_t k = 0; k < g_total[i].v.size(); ++k) {
      double expect;
      if (shared) {
        expect = g_l1[i].v[k] + lambda * g_kl1[i].v[k] -
                 alpha * (beta * g_adv[i].v[k] + lambda * g_kl2[i].v[k]);
      } else if (name.rfind("h2", 0) == 0) {
        // downstream of the reversal: normal gradients
        expect = beta * g_adv[i].v[k] + lambda * g_kl2[i].v[k];
      } else {
        expect = g_l1[i].v[k] + lambda * g_kl1[i].v[k];
      }
      const double denom = std::max({1e-12, std::abs(expect), std::abs(g_total[i].v[k])});
      CAPTURE(name);
      CHECK(std::abs(g_total[i].v[k] - expect) / denom <= 1e-12);
    }
  }
}

TEST_CASE("adversarial loss reaches shared parameters but not h1") {
  const ModelConfig config = mini_config();
  const ModelParams params = init_params(config, 15);
  Rng rng(9);
  const ImageU8 img = random_image(8, rng);
  const std::vector<int> tokens = {4, 4, 1};

  Tape tape;
  ModelGraph graph(tape, config, params);
  Rng crop_rng(5);
  auto fwd = graph.forward_train(img, tokens, crop_rng);
  tape.backward(cross_entropy(tape, fwd.s2, 0));

  auto grad_norm = [&](const std::string& name) {
    double n = 0.0;
    for (size_t i = 0; i < params.entries.size(); ++i)
      if (params.entries[i].name == name)
        for (double g : graph.param_node(static_cast<int>(i)).grad().v) n += std::abs(g);
    return n;
  };
  // the same f/r/m storage serves both branches
  CHECK(grad_norm("f.conv1.w") > 0.0);
  CHECK(grad_norm("r.wx") > 0.0);
  CHECK(grad_norm("m.proj_q.w") > 0.0);
  CHECK(grad_norm("h2.fc2.w") > 0.0);
  CHECK(grad_norm("h1.fc2.w") == 0.0);
}

TEST_CASE("config validation and shape inference from params") {
  ModelConfig bad = mini_config();
  bad.crop_fraction_range = {0.0, 0.5};
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = mini_config();
  bad.image_size = 10;
  CHECK_THROWS_AS(bad.validate(), Error);

  const ModelConfig config = ModelConfig::desk_default();
  const ModelParams params = init_params(config, 3);
  const ModelConfig inferred = config_from_params(params);
  CHECK(inferred.image_size == config.image_size);
  CHECK(inferred.embed_dim == config.embed_dim);
  CHECK(inferred.hidden_dim == config.hidden_dim);
  CHECK(inferred.conv_channels == config.conv_channels);
  CHECK(inferred.vocab_size == config.vocab_size);
  CHECK(inferred.answer_count == config.answer_count);
}
