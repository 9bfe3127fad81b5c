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

#include "dbvqa/kvconfig.hpp"

#include <algorithm>
#include <sstream>

#include "dbvqa/dataset_io.hpp"
#include "dbvqa/errors.hpp"

namespace dbvqa {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::map<std::string, std::string> parse_kv_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw Error("config line " + std::to_string(line_no) + ": empty key or value");
    kv[key] = value;
  }
  return kv;
}

std::map<std::string, std::string> parse_kv_file(const std::string& path) {
  return parse_kv_text(read_text_file(path));
}

TrainConfig apply_train_config(TrainConfig base,
                               const std::map<std::string, std::string>& kv) {
  for (const auto& [key, value] : kv) {
    try {
      if (key == "epochs") {
        base.epochs = std::stoi(value);
      } else if (key == "batch_size") {
        base.batch_size = std::stoi(value);
      } else if (key == "learning_rate") {
        base.learning_rate = std::stod(value);
      } else if (key == "adam_beta1") {
        base.adam_beta1 = std::stod(value);
      } else if (key == "adam_beta2") {
        base.adam_beta2 = std::stod(value);
      } else if (key == "adam_eps") {
        base.adam_eps = std::stod(value);
      } else if (key == "lambda") {
        base.lambda = std::stod(value);
      } else if (key == "beta") {
        base.beta = std::stod(value);
      } else if (key == "alpha") {
        base.alpha = std::stod(value);
      } else if (key == "seed") {
        base.seed = std::stoull(value);
      } else if (key == "mode") {
        base.mode = train_mode_from_name(value);
      } else if (key == "kl_stop_grad_s1") {
        if (value != "true" && value != "false")
          throw Error("kl_stop_grad_s1 must be true or false");
        base.kl_stop_grad_s1 = value == "true";
      } else {
        throw Error("unknown config key: " + key);
      }
    } catch (const std::invalid_argument&) {
      throw Error("config key '" + key + "': cannot parse value '" + value + "'");
    } catch (const std::out_of_range&) {
      throw Error("config key '" + key + "': value out of range '" + value + "'");
    }
  }
  return base;
}

}  // namespace dbvqa
