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

#include "dbvqa/dataset_io.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dbvqa/errors.hpp"

namespace dbvqa {

using ordered_json = nlohmann::ordered_json;

void write_text_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + path);
    out << content;
    if (!out) throw Error("short write: " + path);
  }
  std::filesystem::rename(tmp, path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

namespace {

ordered_json image_to_json(const ImageU8& img) {
  ordered_json rows = ordered_json::array();
  for (int y = 0; y < img.h; ++y) {
    ordered_json row = ordered_json::array();
    for (int x = 0; x < img.w; ++x) {
      const uint8_t* p = img.pixel(y, x);
      row.push_back(ordered_json::array({p[0], p[1], p[2]}));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

ImageU8 image_from_json(const ordered_json& j) {
  ImageU8 img;
  img.h = static_cast<int>(j.size());
  if (img.h == 0) throw Error("dataset: empty image");
  img.w = static_cast<int>(j[0].size());
  img.rgb.reserve(static_cast<size_t>(img.h) * img.w * 3);
  for (const auto& row : j) {
    if (static_cast<int>(row.size()) != img.w) throw Error("dataset: ragged image rows");
    for (const auto& px : row) {
      if (px.size() != 3) throw Error("dataset: pixel is not RGB");
      for (int c = 0; c < 3; ++c) {
        const int v = px[static_cast<size_t>(c)].get<int>();
        if (v < 0 || v > 255) throw Error("dataset: pixel value out of range");
        img.rgb.push_back(static_cast<uint8_t>(v));
      }
    }
  }
  return img;
}

}  // namespace

void write_split(const DatasetSplit& split, const std::string& jsonl_path,
                 const std::string& header_path) {
  std::ostringstream lines;
  for (const Sample& s : split.samples) {
    ordered_json j;
    j["image"] = image_to_json(s.image);
    j["question"] = s.question_text;
    j["tokens"] = s.question_tokens;
    j["qtype"] = question_type_name(s.qtype);
    j["answer"] = s.answer_id;
    lines << j.dump() << "\n";
  }
  write_text_file_atomic(jsonl_path, lines.str());

  const auto& vocab = AnswerVocabulary::instance();
  ordered_json header;
  header["vocab"] = question_vocabulary();
  ordered_json answers = ordered_json::array();
  for (int i = 0; i < vocab.size(); ++i) answers.push_back(vocab.name(i));
  header["answers"] = answers;
  ordered_json subsets;
  for (int t = 0; t < kQuestionTypeCount; ++t) {
    ordered_json ids = ordered_json::array();
    for (int a : vocab.subset(static_cast<QuestionType>(t))) ids.push_back(vocab.name(a));
    subsets[question_type_name(static_cast<QuestionType>(t))] = ids;
  }
  header["qtype_subsets"] = subsets;
  header["bias_manifest"] = split.bias_manifest;
  header["rho"] = split.rho;
  header["seed"] = split.seed;
  header["split"] = split_kind_name(split.kind);
  header["n"] = split.samples.size();
  write_text_file_atomic(header_path, header.dump(2) + "\n");
}

DatasetSplit read_split(const std::string& jsonl_path, const std::string& header_path) {
  DatasetSplit split;
  ordered_json header;
  try {
    header = ordered_json::parse(read_text_file(header_path));
  } catch (const nlohmann::json::exception& e) {
    throw Error("bad dataset header " + header_path + ": " + e.what());
  }
  split.kind = split_kind_from_name(header.at("split").get<std::string>());
  split.rho = header.at("rho").get<double>();
  split.seed = header.at("seed").get<uint64_t>();
  if (header.contains("bias_manifest"))
    split.bias_manifest =
        header.at("bias_manifest").get<std::map<std::string, std::string>>();
  if (header.at("vocab").get<std::vector<std::string>>() != question_vocabulary())
    throw DatasetMismatch("dataset header vocabulary differs from this build");

  std::istringstream in(read_text_file(jsonl_path));
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error("bad dataset line " + std::to_string(line_no) + ": " + e.what());
    }
    Sample s;
    s.image = image_from_json(j.at("image"));
    s.question_text = j.at("question").get<std::string>();
    s.question_tokens = j.at("tokens").get<std::vector<int>>();
    s.qtype = question_type_from_name(j.at("qtype").get<std::string>());
    s.answer_id = j.at("answer").get<int>();
    if (s.answer_id < 0 || s.answer_id >= AnswerVocabulary::instance().size())
      throw InvalidLabel("dataset line " + std::to_string(line_no) + ": bad answer id");
    split.samples.push_back(std::move(s));
  }
  return split;
}

namespace {

ordered_json row_to_json(const MetricsRow& row) {
  ordered_json j;
  j["n"] = row.n;
  j["f_a"] = row.f_a;
  j["f_q"] = row.f_q;
  j["drop"] = row.drop;
  j["f_m"] = row.f_m;
  j["degenerate"] = row.degenerate;
  return j;
}

MetricsRow row_from_json(const ordered_json& j) {
  MetricsRow row;
  row.n = j.at("n").get<int>();
  row.f_a = j.at("f_a").get<double>();
  row.f_q = j.at("f_q").get<double>();
  row.drop = j.at("drop").get<double>();
  row.f_m = j.at("f_m").get<double>();
  row.degenerate = j.at("degenerate").get<bool>();
  return row;
}

}  // namespace

void write_report_json(const MetricsReport& report, const std::string& path) {
  ordered_json j;
  j["dataset_id"] = report.dataset_id;
  j["checkpoint_id"] = report.checkpoint_id;
  j["shuffle_seed"] = report.shuffle_seed;
  ordered_json rows;
  for (int t = 0; t < kQuestionTypeCount; ++t)
    rows[question_type_name(static_cast<QuestionType>(t))] =
        row_to_json(report.per_type[static_cast<size_t>(t)]);
  rows["average"] = row_to_json(report.average);
  rows["overall"] = row_to_json(report.overall);
  j["rows"] = rows;
  write_text_file_atomic(path, j.dump(2) + "\n");
}

MetricsReport read_report_json(const std::string& path) {
  ordered_json j;
  try {
    j = ordered_json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error("bad report " + path + ": " + e.what());
  }
  MetricsReport report;
  report.dataset_id = j.at("dataset_id").get<std::string>();
  report.checkpoint_id = j.at("checkpoint_id").get<std::string>();
  report.shuffle_seed = j.at("shuffle_seed").get<uint64_t>();
  const auto& rows = j.at("rows");
  for (int t = 0; t < kQuestionTypeCount; ++t)
    report.per_type[static_cast<size_t>(t)] =
        row_from_json(rows.at(question_type_name(static_cast<QuestionType>(t))));
  report.average = row_from_json(rows.at("average"));
  report.overall = row_from_json(rows.at("overall"));
  return report;
}

void write_comparison_json(const RunComparison& cmp, const std::string& path) {
  ordered_json j;
  j["dataset_id"] = cmp.dataset_id;
  ordered_json rows;
  for (const auto& row : cmp.rows) {
    ordered_json r;
    r["a"] = row_to_json(row.a);
    r["b"] = row_to_json(row.b);
    r["delta_f_a"] = row.delta_f_a;
    r["delta_drop"] = row.delta_drop;
    r["delta_f_m"] = row.delta_f_m;
    rows[row.label] = r;
  }
  j["rows"] = rows;
  write_text_file_atomic(path, j.dump(2) + "\n");
}

}  // namespace dbvqa
