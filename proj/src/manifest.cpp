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

#include "dbvqa/manifest.hpp"

#include <openssl/evp.h>

#include <filesystem>
#include <fstream>

#include "dbvqa/dataset_io.hpp"
#include "dbvqa/errors.hpp"

namespace dbvqa {

std::string sha256_hex(std::span<const uint8_t> bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 0xf]);
  }
  return out;
}

std::string sha256_hex(const std::string& text) {
  return sha256_hex(std::span<const uint8_t>(
      reinterpret_cast<const uint8_t*>(text.data()), text.size()));
}

std::string sha256_file(const std::string& path) {
  return sha256_hex(read_text_file(path));
}

void write_manifest(const RunManifest& manifest, const std::string& path) {
  nlohmann::ordered_json j;
  j["command"] = manifest.command;
  j["config"] = manifest.config;
  j["seeds"] = manifest.seeds;
  j["inputs"] = manifest.inputs;
  j["artifacts"] = manifest.artifact_sha256;
  j["wall_clock_sec"] = manifest.wall_clock_sec;
  write_text_file_atomic(path, j.dump(2) + "\n");
}

RunManifest read_manifest(const std::string& path) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error("bad manifest " + path + ": " + e.what());
  }
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.config = j.at("config");
  m.seeds = j.at("seeds").get<std::map<std::string, uint64_t>>();
  m.inputs = j.at("inputs").get<std::vector<std::string>>();
  m.artifact_sha256 = j.at("artifacts").get<std::map<std::string, std::string>>();
  m.wall_clock_sec = j.at("wall_clock_sec").get<double>();
  return m;
}

void verify_manifest_artifacts(const RunManifest& manifest,
                               const std::string& manifest_path) {
  const std::filesystem::path dir = std::filesystem::path(manifest_path).parent_path();
  for (const auto& [name, digest] : manifest.artifact_sha256) {
    const std::string actual = sha256_file((dir / name).string());
    if (actual != digest)
      throw DatasetMismatch("artifact '" + name + "' does not match its manifest digest");
  }
}

}  // namespace dbvqa
