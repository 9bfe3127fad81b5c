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

#include "dbvqa/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "dbvqa/errors.hpp"

namespace dbvqa {

namespace {

constexpr std::array<const char*, kObjectTypeCount> kObjectNames = {
    "building", "water", "road", "tree"};

constexpr std::array<const char*, kQuestionTypeCount> kQuestionTypeNames = {
    "presence", "count", "comparison", "rural_urban"};

// Background and per-type cell colors, RGB.
constexpr std::array<uint8_t, 3> kBackground = {210, 190, 150};
constexpr std::array<std::array<uint8_t, 3>, kObjectTypeCount> kObjectColors = {{
    {128, 128, 128},  // building
    {0, 0, 255},      // water
    {40, 40, 40},     // road
    {0, 160, 0},      // tree
}};

int count_bin_answer(int count) {
  const auto& vocab = AnswerVocabulary::instance();
  if (count == 0) return vocab.id("count_0");
  if (count <= 3) return vocab.id("count_1_3");
  if (count <= 6) return vocab.id("count_4_6");
  return vocab.id("count_7_10");
}

}  // namespace

const char* object_type_name(ObjectType t) {
  return kObjectNames[static_cast<size_t>(t)];
}

const char* question_type_name(QuestionType t) {
  return kQuestionTypeNames[static_cast<size_t>(t)];
}

QuestionType question_type_from_name(const std::string& name) {
  for (int i = 0; i < kQuestionTypeCount; ++i)
    if (name == kQuestionTypeNames[static_cast<size_t>(i)])
      return static_cast<QuestionType>(i);
  throw Error("unknown question type: " + name);
}

const char* split_kind_name(SplitKind k) {
  return k == SplitKind::train_biased ? "train_biased" : "test_balanced";
}

SplitKind split_kind_from_name(const std::string& name) {
  if (name == "train_biased") return SplitKind::train_biased;
  if (name == "test_balanced") return SplitKind::test_balanced;
  throw Error("unknown split kind: " + name);
}

bool Scene::urban() const { return count(ObjectType::building) >= kUrbanBuildingThreshold; }

// ---------------------------------------------------------------------------
// AnswerVocabulary
// ---------------------------------------------------------------------------

AnswerVocabulary::AnswerVocabulary()
    : names_{"yes",     "no",        "rural",     "urban",
             "count_0", "count_1_3", "count_4_6", "count_7_10"} {
  subsets_[static_cast<size_t>(QuestionType::presence)] = {id("yes"), id("no")};
  subsets_[static_cast<size_t>(QuestionType::count)] = {
      id("count_0"), id("count_1_3"), id("count_4_6"), id("count_7_10")};
  subsets_[static_cast<size_t>(QuestionType::comparison)] = {id("yes"), id("no")};
  subsets_[static_cast<size_t>(QuestionType::rural_urban)] = {id("rural"), id("urban")};
}

const AnswerVocabulary& AnswerVocabulary::instance() {
  static const AnswerVocabulary vocab;
  return vocab;
}

const std::string& AnswerVocabulary::name(int id) const {
  if (id < 0 || id >= size()) throw InvalidLabel("answer id out of range: " + std::to_string(id));
  return names_[static_cast<size_t>(id)];
}

int AnswerVocabulary::id(const std::string& name) const {
  for (int i = 0; i < size(); ++i)
    if (names_[static_cast<size_t>(i)] == name) return i;
  return -1;
}

std::span<const int> AnswerVocabulary::subset(QuestionType t) const {
  return subsets_[static_cast<size_t>(t)];
}

// ---------------------------------------------------------------------------
// QuestionSpec
// ---------------------------------------------------------------------------

std::string QuestionSpec::text() const {
  std::ostringstream out;
  switch (qtype) {
    case QuestionType::presence:
      out << "is there a " << object_type_name(type_a) << " in the image";
      break;
    case QuestionType::count:
      out << "how many " << object_type_name(type_a) << " are there";
      break;
    case QuestionType::comparison:
      out << "are there more " << object_type_name(type_a) << " than "
          << object_type_name(type_b);
      break;
    case QuestionType::rural_urban:
      out << "is it a rural or an urban area";
      break;
  }
  return out.str();
}

int QuestionSpec::answer(const Scene& scene) const {
  const auto& vocab = AnswerVocabulary::instance();
  switch (qtype) {
    case QuestionType::presence:
      return scene.count(type_a) >= 1 ? vocab.id("yes") : vocab.id("no");
    case QuestionType::count:
      return count_bin_answer(scene.count(type_a));
    case QuestionType::comparison:
      return scene.count(type_a) > scene.count(type_b) ? vocab.id("yes") : vocab.id("no");
    case QuestionType::rural_urban:
      return scene.urban() ? vocab.id("urban") : vocab.id("rural");
  }
  throw Error("unreachable question type");
}

std::span<const int> QuestionSpec::feasible_answers() const {
  return AnswerVocabulary::instance().subset(qtype);
}

QuestionSpec QuestionSpec::parse(QuestionType qtype, const std::string& text) {
  for (const QuestionSpec& spec : all_question_specs(qtype))
    if (spec.text() == text) return spec;
  throw Error("unrecognized question text: " + text);
}

std::vector<QuestionSpec> all_question_specs(QuestionType t) {
  std::vector<QuestionSpec> specs;
  switch (t) {
    case QuestionType::presence:
    case QuestionType::count:
      for (int a = 0; a < kObjectTypeCount; ++a)
        specs.push_back({t, static_cast<ObjectType>(a)});
      break;
    case QuestionType::comparison:
      for (int a = 0; a < kObjectTypeCount; ++a)
        for (int b = 0; b < kObjectTypeCount; ++b)
          if (a != b)
            specs.push_back({t, static_cast<ObjectType>(a), static_cast<ObjectType>(b)});
      break;
    case QuestionType::rural_urban:
      specs.push_back({t});
      break;
  }
  return specs;
}

// ---------------------------------------------------------------------------
// Tokenizer
// ---------------------------------------------------------------------------

const std::vector<std::string>& question_vocabulary() {
  static const std::vector<std::string> vocab = [] {
    std::vector<std::string> words;
    auto add_words = [&words](const std::string& text) {
      std::istringstream in(text);
      std::string w;
      while (in >> w)
        if (std::find(words.begin(), words.end(), w) == words.end()) words.push_back(w);
    };
    for (int t = 0; t < kQuestionTypeCount; ++t)
      for (const QuestionSpec& spec : all_question_specs(static_cast<QuestionType>(t)))
        add_words(spec.text());
    return words;
  }();
  return vocab;
}

std::vector<int> tokenize(const std::string& text) {
  const auto& vocab = question_vocabulary();
  std::vector<int> ids;
  std::istringstream in(text);
  std::string w;
  while (in >> w) {
    auto it = std::find(vocab.begin(), vocab.end(), w);
    if (it == vocab.end()) throw UnknownToken("word not in question vocabulary: " + w);
    ids.push_back(static_cast<int>(it - vocab.begin()));
  }
  return ids;
}

std::string detokenize(std::span<const int> tokens) {
  const auto& vocab = question_vocabulary();
  std::string out;
  for (size_t i = 0; i < tokens.size(); ++i) {
    const int id = tokens[i];
    if (id < 0 || id >= static_cast<int>(vocab.size()))
      throw UnknownToken("token id out of range: " + std::to_string(id));
    if (i) out += ' ';
    out += vocab[static_cast<size_t>(id)];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scene sampling / rendering
// ---------------------------------------------------------------------------

namespace {

Scene draw_scene(Rng& rng, int grid_size) {
  const int capacity = grid_size * grid_size;
  Scene scene;
  scene.grid_size = grid_size;
  // counts uniform per type, redrawn as a block while they exceed capacity
  while (true) {
    int total = 0;
    for (int t = 0; t < kObjectTypeCount; ++t) {
      scene.counts[static_cast<size_t>(t)] = rng.uniform_int(0, kMaxCountPerType);
      total += scene.counts[static_cast<size_t>(t)];
    }
    if (total <= capacity) break;
  }
  // partial Fisher-Yates over cell indices gives distinct cells
  std::vector<int> cells(static_cast<size_t>(capacity));
  std::iota(cells.begin(), cells.end(), 0);
  int next = 0;
  scene.objects.clear();
  for (int t = 0; t < kObjectTypeCount; ++t) {
    for (int k = 0; k < scene.counts[static_cast<size_t>(t)]; ++k) {
      const int j = next + static_cast<int>(rng.below(static_cast<uint64_t>(capacity - next)));
      std::swap(cells[static_cast<size_t>(next)], cells[static_cast<size_t>(j)]);
      const int cell = cells[static_cast<size_t>(next)];
      ++next;
      scene.objects.push_back({static_cast<ObjectType>(t), cell / grid_size, cell % grid_size});
    }
  }
  return scene;
}

}  // namespace

Scene sample_scene(uint64_t rng_seed, const std::optional<SceneConstraint>& constraint,
                   int grid_size) {
  Rng rng(mix64(rng_seed, 0x5c33u));
  if (!constraint) return draw_scene(rng, grid_size);
  for (int attempt = 0; attempt < kRejectionCap; ++attempt) {
    Scene scene = draw_scene(rng, grid_size);
    if (constraint->question.answer(scene) == constraint->answer_id) return scene;
  }
  throw ConstraintInfeasible(
      "no scene found in " + std::to_string(kRejectionCap) + " attempts for template '" +
      constraint->question.text() + "' with answer '" +
      AnswerVocabulary::instance().name(constraint->answer_id) + "'");
}

ImageU8 render(const Scene& scene) {
  const int cell_px = kImageSize / scene.grid_size;
  if (cell_px * scene.grid_size != kImageSize)
    throw ShapeMismatch("grid size must divide image size");
  ImageU8 img;
  img.h = img.w = kImageSize;
  img.rgb.resize(static_cast<size_t>(kImageSize) * kImageSize * 3);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      uint8_t* p = img.pixel(y, x);
      p[0] = kBackground[0];
      p[1] = kBackground[1];
      p[2] = kBackground[2];
    }
  for (const Scene::Object& obj : scene.objects) {
    const auto& color = kObjectColors[static_cast<size_t>(obj.type)];
    for (int dy = 0; dy < cell_px; ++dy)
      for (int dx = 0; dx < cell_px; ++dx) {
        uint8_t* p = img.pixel(obj.row * cell_px + dy, obj.col * cell_px + dx);
        p[0] = color[0];
        p[1] = color[1];
        p[2] = color[2];
      }
  }
  return img;
}

std::pair<std::string, int> generate_qa(const Scene& scene, QuestionType qtype,
                                        uint64_t rng_seed) {
  Rng rng(mix64(rng_seed, 0x9a11u));
  const std::vector<QuestionSpec> specs = all_question_specs(qtype);
  const QuestionSpec& spec = specs[rng.below(specs.size())];
  return {spec.text(), spec.answer(scene)};
}

// ---------------------------------------------------------------------------
// Split generation
// ---------------------------------------------------------------------------

std::string DatasetSplit::dataset_id() const {
  std::ostringstream out;
  out << "split=" << split_kind_name(kind) << ";n=" << samples.size() << ";rho=" << rho
      << ";seed=" << seed;
  return out.str();
}

DatasetSplit generate_split(int n, SplitKind kind, double rho, uint64_t seed) {
  if (n < 1) throw Error("split size must be >= 1");
  if (rho < 0.5 || rho > 1.0) throw Error("rho must be in [0.5, 1.0]");

  DatasetSplit split;
  split.kind = kind;
  split.rho = rho;
  split.seed = seed;

  const auto& vocab = AnswerVocabulary::instance();

  // Designated majority answers, one per template instantiation, drawn from
  // the split seed.
  std::vector<QuestionSpec> all_specs;
  for (int t = 0; t < kQuestionTypeCount; ++t) {
    auto specs = all_question_specs(static_cast<QuestionType>(t));
    all_specs.insert(all_specs.end(), specs.begin(), specs.end());
  }
  std::unordered_map<std::string, int> majority;  // template text -> answer id
  {
    Rng bias_rng(mix64(seed, 0xb1a5u));
    for (const QuestionSpec& spec : all_specs) {
      const auto feas = spec.feasible_answers();
      majority[spec.text()] = feas[bias_rng.below(feas.size())];
    }
  }
  if (kind == SplitKind::train_biased)
    for (const QuestionSpec& spec : all_specs)
      split.bias_manifest[spec.text()] = vocab.name(majority[spec.text()]);

  // Occurrence counters per template drive exact-rate bias (train) and
  // round-robin answer cycling (test).
  std::unordered_map<std::string, int> occurrence;

  split.samples.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const uint64_t sample_seed = mix64(seed, 0xda7au, static_cast<uint64_t>(i));
    Rng rng(sample_seed);

    const auto qtype = static_cast<QuestionType>(rng.below(kQuestionTypeCount));
    const std::vector<QuestionSpec> specs = all_question_specs(qtype);
    const QuestionSpec spec = specs[rng.below(specs.size())];
    const std::string text = spec.text();
    const auto feas = spec.feasible_answers();
    const int k = occurrence[text]++;

    int target;
    if (kind == SplitKind::train_biased) {
      // the k-th occurrence is a majority sample iff floor((k+1)rho) advances,
      // which pins the empirical majority rate at floor(n_t*rho)/n_t
      const bool is_majority =
          static_cast<int64_t>(std::floor((k + 1) * rho)) > static_cast<int64_t>(std::floor(k * rho));
      const int maj = majority[text];
      if (is_majority) {
        target = maj;
      } else {
        std::vector<int> others;
        for (int a : feas)
          if (a != maj) others.push_back(a);
        target = others[rng.below(others.size())];
      }
    } else {
      target = feas[static_cast<size_t>(k) % feas.size()];
    }

    Sample sample;
    sample.scene = sample_scene(rng.next_u64(), SceneConstraint{spec, target});
    sample.image = render(sample.scene);
    sample.question_text = text;
    sample.question_tokens = tokenize(text);
    sample.qtype = qtype;
    sample.answer_id = spec.answer(sample.scene);
    split.samples.push_back(std::move(sample));
  }
  return split;
}

// ---------------------------------------------------------------------------
// Verification helpers
// ---------------------------------------------------------------------------

std::array<int, kObjectTypeCount> decode_counts_from_image(const ImageU8& image) {
  if (image.h != kImageSize || image.w != kImageSize)
    throw ShapeMismatch("decode: unexpected image size");
  constexpr int grid = 8;
  constexpr int cell_px = kImageSize / grid;
  std::array<int, kObjectTypeCount> counts{};
  for (int gy = 0; gy < grid; ++gy)
    for (int gx = 0; gx < grid; ++gx) {
      const uint8_t* p = image.pixel(gy * cell_px, gx * cell_px);
      if (p[0] == kBackground[0] && p[1] == kBackground[1] && p[2] == kBackground[2]) continue;
      bool matched = false;
      for (int t = 0; t < kObjectTypeCount; ++t) {
        const auto& c = kObjectColors[static_cast<size_t>(t)];
        if (p[0] == c[0] && p[1] == c[1] && p[2] == c[2]) {
          ++counts[static_cast<size_t>(t)];
          matched = true;
          break;
        }
      }
      if (!matched) throw ShapeMismatch("decode: unknown cell color");
    }
  return counts;
}

SplitCheck check_split(const DatasetSplit& split, int min_samples) {
  SplitCheck check;
  auto fail = [&check](const std::string& msg) {
    check.ok = false;
    check.failures.push_back(msg);
  };

  const auto& vocab = AnswerVocabulary::instance();
  std::map<std::string, std::map<int, int>> answer_counts;  // template -> answer -> n
  std::map<std::string, QuestionType> template_type;

  for (size_t i = 0; i < split.samples.size(); ++i) {
    const Sample& s = split.samples[i];
    // re-answer from pixels, independent of the stored scene
    const auto counts = decode_counts_from_image(s.image);
    Scene decoded;
    decoded.counts = counts;
    const QuestionSpec spec = QuestionSpec::parse(s.qtype, s.question_text);
    if (spec.answer(decoded) != s.answer_id)
      fail("sample " + std::to_string(i) + ": stored answer does not match image content");
    if (detokenize(s.question_tokens) != s.question_text)
      fail("sample " + std::to_string(i) + ": tokens do not round-trip");
    answer_counts[s.question_text][s.answer_id]++;
    template_type[s.question_text] = s.qtype;
  }

  for (const auto& [text, counts] : answer_counts) {
    int total = 0;
    for (const auto& [_, c] : counts) total += c;
    if (total < min_samples) continue;
    if (split.kind == SplitKind::train_biased) {
      auto it = split.bias_manifest.find(text);
      if (it == split.bias_manifest.end()) {
        fail("template missing from bias manifest: " + text);
        continue;
      }
      const int maj = vocab.id(it->second);
      const int maj_n = counts.count(maj) ? counts.at(maj) : 0;
      const double rate = static_cast<double>(maj_n) / total;
      if (rate < split.rho - 0.03 || rate > split.rho + 0.03)
        fail("template '" + text + "': majority rate " + std::to_string(rate) +
             " outside [rho-0.03, rho+0.03]");
    } else {
      const QuestionSpec spec = QuestionSpec::parse(template_type[text], text);
      const auto feas = spec.feasible_answers();
      const double uniform = 1.0 / static_cast<double>(feas.size());
      for (int a : feas) {
        const int c = counts.count(a) ? counts.at(a) : 0;
        const double freq = static_cast<double>(c) / total;
        if (std::abs(freq - uniform) > 0.03)
          fail("template '" + text + "': answer '" + vocab.name(a) + "' frequency " +
               std::to_string(freq) + " deviates from uniform by more than 0.03");
      }
    }
  }
  return check;
}

}  // namespace dbvqa
