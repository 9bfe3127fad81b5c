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
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dbvqa/rng.hpp"

namespace dbvqa {

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

enum class ObjectType : int { building = 0, water = 1, road = 2, tree = 3 };
inline constexpr int kObjectTypeCount = 4;
const char* object_type_name(ObjectType t);

enum class QuestionType : int { presence = 0, count = 1, comparison = 2, rural_urban = 3 };
inline constexpr int kQuestionTypeCount = 4;
const char* question_type_name(QuestionType t);
QuestionType question_type_from_name(const std::string& name);

/// Grid-world scene: colored objects on a grid_size x grid_size board.
/// A scene is urban iff it has at least kUrbanBuildingThreshold buildings.
struct Scene {
  struct Object {
    ObjectType type;
    int row;
    int col;
  };

  int grid_size = 8;
  std::vector<Object> objects;
  std::array<int, kObjectTypeCount> counts{};

  int count(ObjectType t) const { return counts[static_cast<size_t>(t)]; }
  bool urban() const;
};

inline constexpr int kUrbanBuildingThreshold = 6;
inline constexpr int kMaxCountPerType = 10;

/// 8-bit RGB image, H x W x 3 row-major.
struct ImageU8 {
  int h = 0;
  int w = 0;
  std::vector<uint8_t> rgb;

  uint8_t* pixel(int y, int x) { return &rgb[(static_cast<size_t>(y) * w + x) * 3]; }
  const uint8_t* pixel(int y, int x) const {
    return &rgb[(static_cast<size_t>(y) * w + x) * 3];
  }
  bool operator==(const ImageU8&) const = default;
};

/// Fixed answer vocabulary shared by every dataset:
/// {yes, no, rural, urban, count_0, count_1_3, count_4_6, count_7_10}.
class AnswerVocabulary {
 public:
  static const AnswerVocabulary& instance();

  int size() const { return static_cast<int>(names_.size()); }
  const std::string& name(int id) const;
  int id(const std::string& name) const;  // -1 if unknown
  std::span<const int> subset(QuestionType t) const;

 private:
  AnswerVocabulary();
  std::vector<std::string> names_;
  std::array<std::vector<int>, kQuestionTypeCount> subsets_;
};

/// A concrete question: a template plus its object-type slots.
/// presence/count use type_a; comparison uses type_a and type_b.
struct QuestionSpec {
  QuestionType qtype;
  ObjectType type_a = ObjectType::building;
  ObjectType type_b = ObjectType::water;

  std::string text() const;
  /// Ground-truth answer id for a scene.
  int answer(const Scene& scene) const;
  /// Answers this question can take.
  std::span<const int> feasible_answers() const;

  /// Parses a template instantiation back into a spec. Throws on unknown text.
  static QuestionSpec parse(QuestionType qtype, const std::string& text);
};

/// Enumerates every template instantiation of a question type, in a fixed
/// canonical order.
std::vector<QuestionSpec> all_question_specs(QuestionType t);

struct Sample {
  ImageU8 image;
  std::string question_text;
  std::vector<int> question_tokens;
  QuestionType qtype;
  int answer_id = -1;
  Scene scene;  // populated when generated in-process; empty after file load
};

enum class SplitKind { train_biased, test_balanced };
const char* split_kind_name(SplitKind k);
SplitKind split_kind_from_name(const std::string& name);

struct DatasetSplit {
  std::vector<Sample> samples;
  SplitKind kind = SplitKind::train_biased;
  double rho = 0.0;
  uint64_t seed = 0;
  /// template text -> designated majority answer name (train_biased only).
  std::map<std::string, std::string> bias_manifest;

  /// Stable identity string used to match checkpoints/reports to data.
  std::string dataset_id() const;
};

// ---------------------------------------------------------------------------
// Question tokenizer (whitespace split over a closed vocabulary)
// ---------------------------------------------------------------------------

const std::vector<std::string>& question_vocabulary();
std::vector<int> tokenize(const std::string& text);
std::string detokenize(std::span<const int> tokens);

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

struct SceneConstraint {
  QuestionSpec question;
  int answer_id;
};

inline constexpr int kRejectionCap = 10000;

/// Draws a scene; counts uniform per type in [0, 10] subject to grid
/// capacity. With a constraint, rejection-samples until the constraint's
/// question evaluates to the requested answer (at most kRejectionCap
/// attempts, then ConstraintInfeasible).
Scene sample_scene(uint64_t rng_seed, const std::optional<SceneConstraint>& constraint,
                   int grid_size = 8);

inline constexpr int kImageSize = 32;

/// Deterministic rasterization: sand background, one 4x4 color block per
/// object cell.
ImageU8 render(const Scene& scene);

/// Picks a template instantiation of the given type and answers it from the
/// scene ground truth.
std::pair<std::string, int> generate_qa(const Scene& scene, QuestionType qtype,
                                        uint64_t rng_seed);

/// Generates a full split. train_biased drives each template's majority
/// answer to an empirical rate of rho; test_balanced cycles uniformly over
/// feasible answers per template. Pure function of its arguments.
DatasetSplit generate_split(int n, SplitKind kind, double rho, uint64_t seed);

// ---------------------------------------------------------------------------
// Verification helpers (also used by the CLI --verify path)
// ---------------------------------------------------------------------------

/// Inverts render(): recovers per-type counts from cell colors. Throws
/// ShapeMismatch on unexpected image geometry or colors.
std::array<int, kObjectTypeCount> decode_counts_from_image(const ImageU8& image);

struct SplitCheck {
  bool ok = true;
  std::vector<std::string> failures;
};

/// Empirical bias / balance check with the tolerance band used by the
/// dataset contract (rate within 0.03 for every instantiation with at
/// least min_samples samples). Also re-answers every sample from its image.
SplitCheck check_split(const DatasetSplit& split, int min_samples = 200);

}  // namespace dbvqa
