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

#include <map>
#include <string>

#include "dbvqa/trainer.hpp"

namespace dbvqa {

/// Parses a flat "key = value" file. '#' starts a comment; blank lines are
/// skipped. Throws Error on malformed lines.
std::map<std::string, std::string> parse_kv_file(const std::string& path);
std::map<std::string, std::string> parse_kv_text(const std::string& text);

/// Applies known keys (epochs, batch_size, learning_rate, adam_beta1,
/// adam_beta2, adam_eps, lambda, beta, alpha, seed, mode, kl_stop_grad_s1)
/// over a base config. Unknown keys raise Error.
TrainConfig apply_train_config(TrainConfig base,
                               const std::map<std::string, std::string>& kv);

}  // namespace dbvqa
