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

#include "dbvqa/evaluator.hpp"

#include <cmath>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "dbvqa/errors.hpp"

namespace dbvqa {

int ModelPredictor::predict(const ImageU8& image, std::span<const int> tokens) const {
  Tape tape;
  ModelGraph graph(tape, config_, params_);
  DiffValue s1 = graph.forward_infer(image, tokens);
  return argmax(s1.value().v);
}

namespace {

void require_balanced(const DatasetSplit& dataset) {
  if (dataset.kind != SplitKind::test_balanced)
    throw DatasetMismatch("evaluation expects a test_balanced split");
  if (dataset.samples.empty()) throw EmptyReport("evaluation over empty split");
}

MetricsRow make_row(int n, int correct_a, int correct_q) {
  MetricsRow row;
  row.n = n;
  if (n == 0) {
    row.degenerate = true;
    return row;
  }
  row.f_a = static_cast<double>(correct_a) / n;
  row.f_q = static_cast<double>(correct_q) / n;
  row.drop = row.f_a - row.f_q;
  row.f_m = f_m_metric(row.f_a, row.f_q, &row.degenerate);
  return row;
}

MetricsRow make_row_rates(double f_a, double f_q, int n) {
  MetricsRow row;
  row.n = n;
  row.f_a = f_a;
  row.f_q = f_q;
  row.drop = f_a - f_q;
  row.f_m = f_m_metric(f_a, f_q, &row.degenerate);
  return row;
}

}  // namespace

std::vector<bool> evaluate_standard(const Predictor& model, const DatasetSplit& dataset,
                                    std::array<TypeCounts, kQuestionTypeCount>& counts) {
  require_balanced(dataset);
  std::vector<bool> correct(dataset.samples.size());
  for (size_t i = 0; i < dataset.samples.size(); ++i) {
    const Sample& s = dataset.samples[i];
    auto& c = counts[static_cast<size_t>(s.qtype)];
    ++c.n;
    const bool ok = model.predict(s.image, s.question_tokens) == s.answer_id;
    correct[i] = ok;
    if (ok) ++c.correct_standard;
  }
  return correct;
}

std::vector<bool> evaluate_random_image(const Predictor& model,
                                        const DatasetSplit& dataset, uint64_t shuffle_seed,
                                        std::array<TypeCounts, kQuestionTypeCount>& counts) {
  require_balanced(dataset);
  const size_t n = dataset.samples.size();
  // the image assignment is precomputed once from the seed
  std::vector<size_t> assignment(n);
  Rng rng(mix64(shuffle_seed, 0x51a7ul));
  for (size_t i = 0; i < n; ++i) assignment[i] = static_cast<size_t>(rng.below(n));

  std::vector<bool> correct(n);
  for (size_t i = 0; i < n; ++i) {
    const Sample& s = dataset.samples[i];
    const ImageU8& image = dataset.samples[assignment[i]].image;
    auto& c = counts[static_cast<size_t>(s.qtype)];
    const bool ok = model.predict(image, s.question_tokens) == s.answer_id;
    correct[i] = ok;
    if (ok) ++c.correct_random_image;
  }
  return correct;
}

double f_m_metric(double f_a, double f_q, bool* degenerate) {
  if (degenerate) *degenerate = false;
  if (f_a <= 0.0 || f_q >= f_a) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  return 2.0 * (f_a * f_a - f_a * f_q) / (2.0 * f_a - f_q);
}

MetricsReport aggregate(const std::array<TypeCounts, kQuestionTypeCount>& counts) {
  MetricsReport report;
  int nonempty = 0;
  double sum_fa = 0.0, sum_fq = 0.0;
  int pooled_n = 0, pooled_a = 0, pooled_q = 0;
  for (int t = 0; t < kQuestionTypeCount; ++t) {
    const TypeCounts& c = counts[static_cast<size_t>(t)];
    report.per_type[static_cast<size_t>(t)] =
        make_row(c.n, c.correct_standard, c.correct_random_image);
    if (c.n == 0) {
      std::cerr << "warning: question type '"
                << question_type_name(static_cast<QuestionType>(t))
                << "' has no samples; excluded from the average row\n";
      continue;
    }
    const MetricsRow& row = report.per_type[static_cast<size_t>(t)];
    ++nonempty;
    sum_fa += row.f_a;
    sum_fq += row.f_q;
    pooled_n += c.n;
    pooled_a += c.correct_standard;
    pooled_q += c.correct_random_image;
  }
  if (nonempty == 0) throw EmptyReport("all question types are empty");
  report.average = make_row_rates(sum_fa / nonempty, sum_fq / nonempty, pooled_n);
  report.overall = make_row(pooled_n, pooled_a, pooled_q);
  return report;
}

MetricsReport evaluate_model(const Predictor& model, const DatasetSplit& dataset,
                             uint64_t shuffle_seed, const std::string& checkpoint_id) {
  std::array<TypeCounts, kQuestionTypeCount> counts{};
  evaluate_standard(model, dataset, counts);
  evaluate_random_image(model, dataset, shuffle_seed, counts);
  MetricsReport report = aggregate(counts);
  report.dataset_id = dataset.dataset_id();
  report.checkpoint_id = checkpoint_id;
  report.shuffle_seed = shuffle_seed;
  return report;
}

RunComparison compare_runs(const MetricsReport& a, const MetricsReport& b) {
  if (a.dataset_id != b.dataset_id)
    throw DatasetMismatch("reports cover different datasets: '" + a.dataset_id +
                          "' vs '" + b.dataset_id + "'");
  RunComparison cmp;
  cmp.dataset_id = a.dataset_id;
  auto add = [&cmp](const std::string& label, const MetricsRow& ra, const MetricsRow& rb) {
    RunComparison::Row row;
    row.label = label;
    row.a = ra;
    row.b = rb;
    row.delta_f_a = rb.f_a - ra.f_a;
    row.delta_drop = rb.drop - ra.drop;
    row.delta_f_m = rb.f_m - ra.f_m;
    cmp.rows.push_back(std::move(row));
  };
  for (int t = 0; t < kQuestionTypeCount; ++t)
    add(question_type_name(static_cast<QuestionType>(t)),
        a.per_type[static_cast<size_t>(t)], b.per_type[static_cast<size_t>(t)]);
  add("average", a.average, b.average);
  add("overall", a.overall, b.overall);
  return cmp;
}

namespace {

std::string fmt4(double x) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4) << x;
  return out.str();
}

}  // namespace

std::string render_report_text(const MetricsReport& report) {
  std::ostringstream out;
  out << std::left << std::setw(14) << "Question Type" << std::right << std::setw(8) << "n"
      << std::setw(10) << "F_a" << std::setw(10) << "F_q" << std::setw(10) << "F_a-F_q"
      << std::setw(10) << "F_m" << "\n";
  auto line = [&out](const std::string& label, const MetricsRow& r) {
    out << std::left << std::setw(14) << label << std::right << std::setw(8) << r.n
        << std::setw(10) << fmt4(r.f_a) << std::setw(10) << fmt4(r.f_q) << std::setw(10)
        << fmt4(r.drop) << std::setw(10) << fmt4(r.f_m) << (r.degenerate ? "  (degenerate)" : "")
        << "\n";
  };
  for (int t = 0; t < kQuestionTypeCount; ++t)
    line(question_type_name(static_cast<QuestionType>(t)),
         report.per_type[static_cast<size_t>(t)]);
  line("Average", report.average);
  line("Overall", report.overall);
  return out.str();
}

std::string render_comparison_text(const RunComparison& cmp, const std::string& label_a,
                                   const std::string& label_b) {
  std::ostringstream out;
  out << "dataset: " << cmp.dataset_id << "\n";
  out << std::left << std::setw(14) << "Question Type";
  for (const std::string& who : {label_a, label_b})
    out << std::right << std::setw(10) << (who + ":F_a") << std::setw(12) << (who + ":drop")
        << std::setw(10) << (who + ":F_m");
  out << std::right << std::setw(10) << "dF_a" << std::setw(10) << "ddrop" << std::setw(10)
      << "dF_m" << "\n";
  for (const auto& row : cmp.rows) {
    out << std::left << std::setw(14) << row.label;
    for (const MetricsRow* r : {&row.a, &row.b})
      out << std::right << std::setw(10) << fmt4(r->f_a) << std::setw(12) << fmt4(r->drop)
          << std::setw(10) << fmt4(r->f_m);
    out << std::right << std::setw(10) << fmt4(row.delta_f_a) << std::setw(10)
        << fmt4(row.delta_drop) << std::setw(10) << fmt4(row.delta_f_m) << "\n";
  }
  return out.str();
}

}  // namespace dbvqa
