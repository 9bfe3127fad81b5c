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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dbvqa/datagen.hpp"
#include "dbvqa/model.hpp"

namespace dbvqa {

/// Anything that maps (image, question) to an answer id. Lets the metric
/// machinery run against stub models in tests.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual int predict(const ImageU8& image, std::span<const int> tokens) const = 0;
};

/// argmax of forward_infer over a trained parameter set.
class ModelPredictor : public Predictor {
 public:
  ModelPredictor(ModelConfig config, ModelParams params)
      : config_(std::move(config)), params_(std::move(params)) {}
  int predict(const ImageU8& image, std::span<const int> tokens) const override;

 private:
  ModelConfig config_;
  ModelParams params_;
};

/// One row of the metrics report.
struct MetricsRow {
  int n = 0;
  double f_a = 0.0;
  double f_q = 0.0;
  double drop = 0.0;
  double f_m = 0.0;
  bool degenerate = false;
};

struct MetricsReport {
  std::string dataset_id;
  std::string checkpoint_id;
  uint64_t shuffle_seed = 0;
  std::array<MetricsRow, kQuestionTypeCount> per_type;
  MetricsRow average;
  MetricsRow overall;

  const MetricsRow& row(QuestionType t) const {
    return per_type[static_cast<size_t>(t)];
  }
};

/// Accuracy of a question type under both protocols, as raw counts.
struct TypeCounts {
  int n = 0;
  int correct_standard = 0;
  int correct_random_image = 0;
};

/// Standard protocol: prediction on each sample's own image. Returns
/// per-sample correctness; per-type tallies accumulate into counts.
std::vector<bool> evaluate_standard(const Predictor& model, const DatasetSplit& dataset,
                                    std::array<TypeCounts, kQuestionTypeCount>& counts);

/// Question+Random-Image protocol: every sample's image is replaced by the
/// image of a uniformly drawn test sample (with replacement, self allowed).
std::vector<bool> evaluate_random_image(const Predictor& model,
                                        const DatasetSplit& dataset, uint64_t shuffle_seed,
                                        std::array<TypeCounts, kQuestionTypeCount>& counts);

/// Harmonic mean of accuracy and performance drop:
/// 2*(f_a^2 - f_a*f_q) / (2*f_a - f_q). Degenerate inputs (f_a = 0 or
/// f_q >= f_a) map to 0 with the flag set.
double f_m_metric(double f_a, double f_q, bool* degenerate = nullptr);

/// Builds the full report: per-type rows plus average (unweighted mean over
/// non-empty types) and overall (pooled) rows. drop and f_m are recomputed
/// from each row's own (f_a, f_q). Types with zero samples are flagged
/// degenerate and excluded from the average; throws EmptyReport when every
/// type is empty.
MetricsReport aggregate(const std::array<TypeCounts, kQuestionTypeCount>& counts);

/// Orchestrates both protocols over a balanced test split.
MetricsReport evaluate_model(const Predictor& model, const DatasetSplit& dataset,
                             uint64_t shuffle_seed, const std::string& checkpoint_id = "");

/// Side-by-side comparison of two reports over the same dataset.
struct RunComparison {
  std::string dataset_id;
  struct Row {
    std::string label;
    MetricsRow a;
    MetricsRow b;
    double delta_f_a = 0.0;
    double delta_drop = 0.0;
    double delta_f_m = 0.0;
  };
  std::vector<Row> rows;  // presence, count, comparison, rural_urban, average, overall
};

/// Throws DatasetMismatch when the reports' dataset ids differ.
RunComparison compare_runs(const MetricsReport& a, const MetricsReport& b);

/// Aligned-text renderings.
std::string render_report_text(const MetricsReport& report);
std::string render_comparison_text(const RunComparison& cmp, const std::string& label_a,
                                   const std::string& label_b);

}  // namespace dbvqa
