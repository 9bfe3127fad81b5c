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

#include "dbvqa/trainer.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "dbvqa/errors.hpp"
#include "dbvqa/objective.hpp"

namespace dbvqa {

const char* train_mode_name(TrainMode m) {
  return m == TrainMode::debiased ? "debiased" : "baseline";
}

TrainMode train_mode_from_name(const std::string& name) {
  if (name == "debiased") return TrainMode::debiased;
  if (name == "baseline") return TrainMode::baseline;
  throw Error("unknown train mode: " + name);
}

void TrainConfig::validate() const {
  if (epochs < 0) throw Error("epochs must be >= 0");
  if (batch_size < 1) throw Error("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw Error("learning_rate must be > 0");
  if (lambda < 0.0 || beta < 0.0 || alpha < 0.0)
    throw Error("lambda, beta, alpha must be >= 0");
}

TrainConfig TrainConfig::desk_profile() { return TrainConfig{}; }

TrainConfig TrainConfig::paper_profile() {
  TrainConfig c;
  c.epochs = 150;
  c.batch_size = 280;
  c.learning_rate = 1e-5;
  return c;
}

void AdamOptimizer::step(std::vector<Tensor*> params,
                         const std::vector<const Tensor*>& grads) {
  if (params.size() != grads.size()) throw ShapeMismatch("adam: arity mismatch");
  if (m_.empty()) {
    for (const Tensor* p : params) {
      m_.push_back(Tensor::zeros(p->shape));
      v_.push_back(Tensor::zeros(p->shape));
    }
  }
  if (m_.size() != params.size()) throw ShapeMismatch("adam: parameter set changed");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = *grads[i];
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    if (!p.same_shape(g)) throw ShapeMismatch("adam: grad shape mismatch");
    for (size_t k = 0; k < p.v.size(); ++k) {
      m.v[k] = beta1_ * m.v[k] + (1.0 - beta1_) * g.v[k];
      v.v[k] = beta2_ * v.v[k] + (1.0 - beta2_) * g.v[k] * g.v[k];
      const double m_hat = m.v[k] / bc1;
      const double v_hat = v.v[k] / bc2;
      p.v[k] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
    }
  }
}

std::vector<int> epoch_shuffle(int n, uint64_t seed, int epoch) {
  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix64(seed, 0x500fful, static_cast<uint64_t>(epoch)));
  rng.shuffle(order);
  return order;
}

Rng crop_rng_for(uint64_t seed, int epoch, int dataset_index) {
  return Rng(mix64(mix64(seed, 0xc4a9ul, static_cast<uint64_t>(epoch)),
                   static_cast<uint64_t>(dataset_index)));
}

TrainResult train(const ModelConfig& model_config, const TrainConfig& train_config,
                  const DatasetSplit& dataset,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
  model_config.validate();
  train_config.validate();
  if (dataset.kind != SplitKind::train_biased)
    throw DatasetMismatch("train expects a train_biased split");
  if (dataset.samples.empty()) throw Error("train: empty dataset");

  ModelConfig config = model_config;
  config.grl_alpha = train_config.alpha;
  const double lambda = train_config.effective_lambda();
  const double beta = train_config.effective_beta();
  const bool adversarial = train_config.mode == TrainMode::debiased;

  TrainResult result;
  result.params = init_params(config, train_config.seed);
  AdamOptimizer adam(train_config.learning_rate, train_config.adam_beta1,
                     train_config.adam_beta2, train_config.adam_eps);

  const int n = static_cast<int>(dataset.samples.size());
  Tape tape;
  for (int epoch = 0; epoch < train_config.epochs; ++epoch) {
    const std::vector<int> order = epoch_shuffle(n, train_config.seed, epoch);
    EpochRecord rec;
    rec.epoch = epoch;
    int correct1 = 0, correct2 = 0;

    for (int start = 0, batch_index = 0; start < n;
         start += train_config.batch_size, ++batch_index) {
      const int end = std::min(n, start + train_config.batch_size);
      const int bsize = end - start;
      tape.reset();
      ModelGraph graph(tape, config, result.params);

      std::vector<DiffValue> s1s, s2s;
      std::vector<int> answers;
      s1s.reserve(static_cast<size_t>(bsize));
      answers.reserve(static_cast<size_t>(bsize));
      for (int k = start; k < end; ++k) {
        const Sample& sample = dataset.samples[static_cast<size_t>(order[static_cast<size_t>(k)])];
        answers.push_back(sample.answer_id);
        if (adversarial) {
          Rng crop_rng =
              crop_rng_for(train_config.seed, epoch, order[static_cast<size_t>(k)]);
          auto fwd = graph.forward_train(sample.image, sample.question_tokens, crop_rng);
          s1s.push_back(fwd.s1);
          s2s.push_back(fwd.s2);
          if (argmax(fwd.s2.value().v) == sample.answer_id) ++correct2;
        } else {
          s1s.push_back(graph.forward_infer(sample.image, sample.question_tokens));
        }
        if (argmax(s1s.back().value().v) == sample.answer_id) ++correct1;
      }

      LossBreakdown loss = total_loss_batch(tape, s1s, s2s, answers, lambda, beta,
                                            train_config.kl_stop_grad_s1);
      if (!std::isfinite(loss.total))
        throw NonFiniteLoss("non-finite loss at epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(batch_index));
      tape.backward(loss.total_node);

      std::vector<Tensor*> params;
      std::vector<const Tensor*> grads;
      for (size_t i = 0; i < result.params.entries.size(); ++i) {
        params.push_back(&result.params.entries[i].tensor);
        grads.push_back(&graph.param_node(static_cast<int>(i)).grad());
      }
      adam.step(std::move(params), grads);

      rec.l1 += loss.l1 * bsize;
      rec.l_adv += loss.l_adv * bsize;
      rec.l2 += loss.l2 * bsize;
      rec.total += loss.total * bsize;
    }

    rec.l1 /= n;
    rec.l_adv /= n;
    rec.l2 /= n;
    rec.total /= n;
    rec.acc1 = static_cast<double>(correct1) / n;
    rec.acc2 = adversarial ? static_cast<double>(correct2) / n : 0.0;
    result.log.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

void append_u32le(std::vector<uint8_t>& out, uint32_t x) {
  out.push_back(static_cast<uint8_t>(x & 0xff));
  out.push_back(static_cast<uint8_t>((x >> 8) & 0xff));
  out.push_back(static_cast<uint8_t>((x >> 16) & 0xff));
  out.push_back(static_cast<uint8_t>((x >> 24) & 0xff));
}

uint32_t read_u32le(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

}  // namespace

std::vector<uint8_t> serialize_checkpoint(const ModelParams& params) {
  nlohmann::ordered_json header;
  uint64_t offset = 0;
  for (const auto& e : params.entries) {
    header[e.name] = {{"shape", e.tensor.shape},
                      {"dtype", "f32"},
                      {"byte_offset", offset}};
    offset += static_cast<uint64_t>(e.tensor.numel()) * 4;
  }
  const std::string hs = header.dump();

  std::vector<uint8_t> out;
  out.reserve(8 + 4 + hs.size() + offset);
  out.insert(out.end(), kCheckpointMagic, kCheckpointMagic + 8);
  append_u32le(out, static_cast<uint32_t>(hs.size()));
  out.insert(out.end(), hs.begin(), hs.end());
  for (const auto& e : params.entries) {
    for (double x : e.tensor.v) {
      const float f = static_cast<float>(x);
      uint32_t bits;
      std::memcpy(&bits, &f, 4);
      append_u32le(out, bits);
    }
  }
  return out;
}

ModelParams deserialize_checkpoint(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
    throw CorruptCheckpoint("bad checkpoint magic");
  const uint32_t header_len = read_u32le(bytes.data() + 8);
  if (bytes.size() < 12ull + header_len) throw CorruptCheckpoint("truncated header");

  nlohmann::ordered_json header;
  try {
    header = nlohmann::ordered_json::parse(bytes.begin() + 12, bytes.begin() + 12 + header_len);
  } catch (const nlohmann::json::exception&) {
    throw CorruptCheckpoint("unparseable checkpoint header");
  }
  if (!header.is_object() || header.empty())
    throw CorruptCheckpoint("checkpoint header is not an object");

  const size_t data_start = 12ull + header_len;
  ModelParams params;
  uint64_t expected_offset = 0;
  for (auto it = header.begin(); it != header.end(); ++it) {
    const auto& meta = it.value();
    if (!meta.contains("shape") || !meta.contains("dtype") || !meta.contains("byte_offset"))
      throw CorruptCheckpoint("incomplete header entry for " + it.key());
    if (meta["dtype"] != "f32")
      throw CorruptCheckpoint("unsupported dtype in checkpoint: " +
                              meta["dtype"].get<std::string>());
    const std::vector<int> shape = meta["shape"].get<std::vector<int>>();
    const uint64_t offset = meta["byte_offset"].get<uint64_t>();
    if (offset != expected_offset)
      throw CorruptCheckpoint("non-contiguous parameter block for " + it.key());
    int64_t numel = 1;
    for (int d : shape) {
      if (d < 1) throw CorruptCheckpoint("invalid shape for " + it.key());
      numel *= d;
    }
    const size_t begin = data_start + offset;
    const size_t nbytes = static_cast<size_t>(numel) * 4;
    if (begin + nbytes > bytes.size())
      throw CorruptCheckpoint("truncated data block for " + it.key());
    Tensor t(shape);
    for (int64_t k = 0; k < numel; ++k) {
      const uint32_t bits = read_u32le(bytes.data() + begin + static_cast<size_t>(k) * 4);
      float f;
      std::memcpy(&f, &bits, 4);
      t.v[static_cast<size_t>(k)] = static_cast<double>(f);
    }
    params.entries.push_back({it.key(), std::move(t)});
    expected_offset = offset + nbytes;
  }
  if (data_start + expected_offset != bytes.size())
    throw CorruptCheckpoint("checkpoint size does not match header");
  return params;
}

void save_checkpoint(const ModelParams& params, const std::string& path) {
  const std::vector<uint8_t> bytes = serialize_checkpoint(params);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open checkpoint for writing: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("short write to checkpoint: " + path);
  }
  std::filesystem::rename(tmp, path);
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace dbvqa
