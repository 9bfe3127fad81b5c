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
#include "dbvqa/evaluator.hpp"

using namespace dbvqa;

namespace {

// Answers every question correctly from the image pixels alone.
class OraclePredictor : public Predictor {
 public:
  int predict(const ImageU8& image, std::span<const int> tokens) const override {
    const std::string text = detokenize(tokens);
    for (int t = 0; t < kQuestionTypeCount; ++t)
      for (const QuestionSpec& spec : all_question_specs(static_cast<QuestionType>(t)))
        if (spec.text() == text) {
          Scene scene;
          scene.counts = decode_counts_from_image(image);
          return spec.answer(scene);
        }
    throw Error("oracle: unknown question " + text);
  }
};

class ConstantPredictor : public Predictor {
 public:
  explicit ConstantPredictor(int answer) : answer_(answer) {}
  int predict(const ImageU8&, std::span<const int>) const override { return answer_; }

 private:
  int answer_;
};

// Deterministic in the question, blind to the image.
class ImageBlindPredictor : public Predictor {
 public:
  int predict(const ImageU8&, std::span<const int> tokens) const override {
    uint64_t h = 0;
    for (int t : tokens) h = mix64(h, static_cast<uint64_t>(t));
    return static_cast<int>(h % 8);
  }
};

const DatasetSplit& balanced_split() {
  static const DatasetSplit split = generate_split(1200, SplitKind::test_balanced, 0.9, 50);
  return split;
}

}  // namespace

TEST_CASE("f_m fixtures reproduce the published values") {
  struct Fixture {
    double f_a, drop, f_m;
  };
  // (accuracy, performance drop, printed harmonic metric), both methods
  const Fixture fixtures[] = {
      {0.9011, 0.0450, 0.0857}, {0.6959, 0.1707, 0.2742}, {0.8738, 0.0150, 0.0295},
      {0.9000, 0.3900, 0.5442}, {0.8427, 0.1552, 0.2621}, {0.8297, 0.0735, 0.1350},
      {0.8994, 0.0852, 0.1557}, {0.6779, 0.2355, 0.3496}, {0.8718, 0.1130, 0.2001},
      {0.8600, 0.4300, 0.5733}, {0.8273, 0.2035, 0.3267}, {0.8227, 0.1250, 0.2170},
  };
  for (const Fixture& fx : fixtures) {
    bool degenerate = true;
    const double got = f_m_metric(fx.f_a, fx.f_a - fx.drop, &degenerate);
    CAPTURE(fx.f_a);
    CHECK(!degenerate);
    CHECK(std::abs(got - fx.f_m) <= 5e-5);
    // printed value is the 4-decimal rounding of the computed one
    CHECK(std::round(got * 1e4) / 1e4 == doctest::Approx(fx.f_m).epsilon(1e-12));
  }
}

TEST_CASE("f_m endpoints and degeneracy") {
  bool degenerate = false;
  CHECK(f_m_metric(0.8, 0.0, &degenerate) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(!degenerate);
  CHECK(f_m_metric(0.8, 0.8, &degenerate) == 0.0);
  CHECK(degenerate);
  CHECK(f_m_metric(0.0, 0.0, &degenerate) == 0.0);
  CHECK(degenerate);
  CHECK(f_m_metric(0.5, 0.9, &degenerate) == 0.0);  // f_q above f_a
  CHECK(degenerate);
}

TEST_CASE("f_m equals the harmonic mean of accuracy and drop") {
  for (int ia = 1; ia <= 20; ++ia) {
    const double f_a = ia / 20.0;
    for (int iq = 0; iq < 20; ++iq) {
      const double f_q = f_a * iq / 20.0;
      if (f_q >= f_a) continue;
      const double drop = f_a - f_q;
      const double harmonic = 2.0 * f_a * drop / (f_a + drop);
      CHECK(std::abs(f_m_metric(f_a, f_q) - harmonic) <= 1e-12);
    }
  }
}

TEST_CASE("f_m monotonicity: lower f_q, higher metric, bounded by f_a") {
  for (double f_a : {0.3, 0.65, 0.97}) {
    double prev = -1.0;
    for (double f_q = f_a - 1e-6; f_q >= 0.0; f_q -= 0.01) {
      const double m = f_m_metric(f_a, std::max(0.0, f_q));
      CHECK(m > prev);
      CHECK(m <= f_a + 1e-15);
      prev = m;
    }
  }
}

TEST_CASE("aggregate: average is the unweighted per-type mean") {
  std::array<TypeCounts, kQuestionTypeCount> counts{};
  // per-type accuracies mirror the published per-type values
  const double fas[] = {0.8994, 0.6779, 0.8718, 0.8600};
  for (int t = 0; t < kQuestionTypeCount; ++t) {
    counts[static_cast<size_t>(t)].n = 10000;
    counts[static_cast<size_t>(t)].correct_standard =
        static_cast<int>(std::lround(fas[t] * 10000));
    counts[static_cast<size_t>(t)].correct_random_image = 5000;
  }
  const MetricsReport report = aggregate(counts);
  CHECK(std::round(report.average.f_a * 1e4) / 1e4 == doctest::Approx(0.8273).epsilon(1e-12));
  CHECK(report.average.f_a == doctest::Approx(0.827275).epsilon(1e-12));
  // overall pools the counts
  CHECK(report.overall.n == 40000);
  CHECK(report.overall.f_a ==
        doctest::Approx((8994 + 6779 + 8718 + 8600) / 40000.0).epsilon(1e-12));
}

TEST_CASE("aggregate: single non-empty type makes average equal overall") {
  std::array<TypeCounts, kQuestionTypeCount> counts{};
  counts[1].n = 400;
  counts[1].correct_standard = 300;
  counts[1].correct_random_image = 100;
  const MetricsReport report = aggregate(counts);
  CHECK(report.average.f_a == report.per_type[1].f_a);
  CHECK(report.overall.f_a == report.per_type[1].f_a);
  CHECK(report.average.f_q == report.per_type[1].f_q);
  CHECK(report.per_type[0].degenerate);

  std::array<TypeCounts, kQuestionTypeCount> empty{};
  CHECK_THROWS_AS(aggregate(empty), EmptyReport);
}

TEST_CASE("oracle predictor scores 1.0 everywhere") {
  const MetricsReport report = evaluate_model(OraclePredictor(), balanced_split(), 7);
  for (int t = 0; t < kQuestionTypeCount; ++t)
    CHECK(report.per_type[static_cast<size_t>(t)].f_a == 1.0);
  CHECK(report.overall.f_a == 1.0);
  CHECK(report.average.f_a == 1.0);
  // with random images the oracle answers from the replacement image, so
  // accuracy falls to chance and the metric is live
  CHECK(report.overall.f_q < 0.6);
  CHECK(report.overall.f_m > 0.0);
}

TEST_CASE("constant predictor on a balanced binary type sits near one half") {
  const auto& vocab = AnswerVocabulary::instance();
  std::array<TypeCounts, kQuestionTypeCount> counts{};
  evaluate_standard(ConstantPredictor(vocab.id("yes")), balanced_split(), counts);
  const TypeCounts& presence = counts[static_cast<size_t>(QuestionType::presence)];
  REQUIRE(presence.n >= 200);
  const double f_a = static_cast<double>(presence.correct_standard) / presence.n;
  CHECK(f_a > 0.47);
  CHECK(f_a < 0.53);
}

TEST_CASE("per-type correct counts sum to the overall correct count") {
  std::array<TypeCounts, kQuestionTypeCount> counts{};
  const std::vector<bool> correct =
      evaluate_standard(ImageBlindPredictor(), balanced_split(), counts);
  int total_correct = 0;
  for (bool c : correct) total_correct += c;
  int per_type_sum = 0;
  for (const TypeCounts& c : counts) per_type_sum += c.correct_standard;
  CHECK(per_type_sum == total_correct);
  const MetricsReport report = aggregate(counts);
  CHECK(report.overall.n == static_cast<int>(balanced_split().samples.size()));
}

TEST_CASE("image-blind predictor is a fixed point: f_q equals f_a exactly") {
  const MetricsReport report = evaluate_model(ImageBlindPredictor(), balanced_split(), 99);
  for (int t = 0; t < kQuestionTypeCount; ++t) {
    CHECK(report.per_type[static_cast<size_t>(t)].f_q ==
          report.per_type[static_cast<size_t>(t)].f_a);
    CHECK(report.per_type[static_cast<size_t>(t)].drop == 0.0);
    CHECK(report.per_type[static_cast<size_t>(t)].f_m == 0.0);
    CHECK(report.per_type[static_cast<size_t>(t)].degenerate);
  }
  CHECK(report.overall.f_q == report.overall.f_a);
}

TEST_CASE("random-image protocol is deterministic in its seed") {
  std::array<TypeCounts, kQuestionTypeCount> a{}, b{}, c{};
  OraclePredictor oracle;
  evaluate_random_image(oracle, balanced_split(), 123, a);
  evaluate_random_image(oracle, balanced_split(), 123, b);
  evaluate_random_image(oracle, balanced_split(), 124, c);
  for (int t = 0; t < kQuestionTypeCount; ++t) {
    CHECK(a[static_cast<size_t>(t)].correct_random_image ==
          b[static_cast<size_t>(t)].correct_random_image);
  }
  int diff = 0;
  for (int t = 0; t < kQuestionTypeCount; ++t)
    diff += std::abs(a[static_cast<size_t>(t)].correct_random_image -
                     c[static_cast<size_t>(t)].correct_random_image);
  CHECK(diff > 0);  // a different seed reassigns images
}

TEST_CASE("evaluation rejects non-balanced splits") {
  const DatasetSplit biased = generate_split(16, SplitKind::train_biased, 0.9, 51);
  std::array<TypeCounts, kQuestionTypeCount> counts{};
  CHECK_THROWS_AS(evaluate_standard(ImageBlindPredictor(), biased, counts), DatasetMismatch);
}

TEST_CASE("compare_runs: deltas, ordering, dataset identity") {
  const MetricsReport ra = evaluate_model(ImageBlindPredictor(), balanced_split(), 7);
  SUBCASE("identical reports give zero deltas") {
    const RunComparison cmp = compare_runs(ra, ra);
    REQUIRE(cmp.rows.size() == 6);
    CHECK(cmp.rows[0].label == "presence");
    CHECK(cmp.rows[1].label == "count");
    CHECK(cmp.rows[2].label == "comparison");
    CHECK(cmp.rows[3].label == "rural_urban");
    CHECK(cmp.rows[4].label == "average");
    CHECK(cmp.rows[5].label == "overall");
    for (const auto& row : cmp.rows) {
      CHECK(row.delta_f_a == 0.0);
      CHECK(row.delta_drop == 0.0);
      CHECK(row.delta_f_m == 0.0);
    }
  }
  SUBCASE("published overall rows subtract as expected") {
    MetricsReport easy2hard = ra, ours = ra;
    easy2hard.overall = {100, 0.8297, 0.7562, 0.0735, 0.1350, false};
    ours.overall = {100, 0.8227, 0.6977, 0.1250, 0.2170, false};
    const RunComparison cmp = compare_runs(easy2hard, ours);
    const auto& overall = cmp.rows[5];
    CHECK(overall.delta_f_a == doctest::Approx(-0.0070).epsilon(1e-12));
    CHECK(overall.delta_drop == doctest::Approx(0.0515).epsilon(1e-12));
    CHECK(overall.delta_f_m == doctest::Approx(0.0820).epsilon(1e-12));
  }
  SUBCASE("mismatched datasets are rejected") {
    MetricsReport rb = ra;
    rb.dataset_id = "split=test_balanced;n=77;rho=0.9;seed=1";
    CHECK_THROWS_AS(compare_runs(ra, rb), DatasetMismatch);
  }
  SUBCASE("text renderings are stable") {
    const RunComparison cmp = compare_runs(ra, ra);
    CHECK(render_comparison_text(cmp, "a", "b") == render_comparison_text(cmp, "a", "b"));
    CHECK(render_report_text(ra) == render_report_text(ra));
    CHECK(render_report_text(ra).find("Overall") != std::string::npos);
  }
}

TEST_CASE("model predictor plugs into the evaluation stack") {
  const ModelConfig config = ModelConfig::desk_default();
  const ModelParams params = init_params(config, 90);
  const DatasetSplit small = generate_split(64, SplitKind::test_balanced, 0.9, 52);
  const MetricsReport report =
      evaluate_model(ModelPredictor(config, params), small, 3, "ckpt-test");
  CHECK(report.checkpoint_id == "ckpt-test");
  CHECK(report.dataset_id == small.dataset_id());
  CHECK(report.overall.n == 64);
  CHECK(report.overall.f_a >= 0.0);
  CHECK(report.overall.f_a <= 1.0);
}
