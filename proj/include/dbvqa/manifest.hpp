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

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace dbvqa {

std::string sha256_hex(std::span<const uint8_t> bytes);
std::string sha256_hex(const std::string& text);
std::string sha256_file(const std::string& path);

/// Reproducibility sidecar written next to every produced artifact.
struct RunManifest {
  std::string command;
  nlohmann::ordered_json config;  // full flag/config snapshot
  std::map<std::string, uint64_t> seeds;
  std::vector<std::string> inputs;
  std::map<std::string, std::string> artifact_sha256;  // file name -> hex digest
  double wall_clock_sec = 0.0;
};

/// Writes <dir>/<name> atomically.
void write_manifest(const RunManifest& manifest, const std::string& path);
RunManifest read_manifest(const std::string& path);

/// Recomputes the digest of every artifact listed in the manifest
/// (paths resolved relative to the manifest's directory) and throws
/// DatasetMismatch on any difference.
void verify_manifest_artifacts(const RunManifest& manifest,
                               const std::string& manifest_path);

}  // namespace dbvqa
