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

#include <string>

#include "dbvqa/datagen.hpp"
#include "dbvqa/evaluator.hpp"

namespace dbvqa {

/// Writes one split as JSON Lines (one sample per line) plus a companion
/// header JSON with vocabularies, per-type answer subsets, the bias
/// manifest, and generation parameters. Writes are atomic (tmp + rename).
void write_split(const DatasetSplit& split, const std::string& jsonl_path,
                 const std::string& header_path);

/// Loads a split written by write_split. Sample scenes are not stored on
/// disk and stay empty.
DatasetSplit read_split(const std::string& jsonl_path, const std::string& header_path);

void write_report_json(const MetricsReport& report, const std::string& path);
MetricsReport read_report_json(const std::string& path);

void write_comparison_json(const RunComparison& cmp, const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file_atomic(const std::string& path, const std::string& content);

}  // namespace dbvqa
