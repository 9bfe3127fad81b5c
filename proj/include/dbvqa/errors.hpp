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

#include <stdexcept>
#include <string>

namespace dbvqa {

/// Base class for all dbvqa runtime failures. CLI maps these to exit code 1.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Rejection sampling exhausted its attempt budget for a scene constraint.
class ConstraintInfeasible : public Error {
 public:
  explicit ConstraintInfeasible(const std::string& what) : Error(what) {}
};

/// Tensor or image dimensions do not match the expected shape.
class ShapeMismatch : public Error {
 public:
  explicit ShapeMismatch(const std::string& what) : Error(what) {}
};

/// Token id outside the closed question vocabulary.
class UnknownToken : public Error {
 public:
  explicit UnknownToken(const std::string& what) : Error(what) {}
};

/// Answer label outside the answer vocabulary.
class InvalidLabel : public Error {
 public:
  explicit InvalidLabel(const std::string& what) : Error(what) {}
};

/// Training loss became NaN or infinite; message carries epoch/batch coordinates.
class NonFiniteLoss : public Error {
 public:
  explicit NonFiniteLoss(const std::string& what) : Error(what) {}
};

/// Checkpoint file failed magic, length, or shape validation.
class CorruptCheckpoint : public Error {
 public:
  explicit CorruptCheckpoint(const std::string& what) : Error(what) {}
};

/// Two artifacts that must refer to the same dataset do not.
class DatasetMismatch : public Error {
 public:
  explicit DatasetMismatch(const std::string& what) : Error(what) {}
};

/// A metrics report was requested over zero usable samples.
class EmptyReport : public Error {
 public:
  explicit EmptyReport(const std::string& what) : Error(what) {}
};

}  // namespace dbvqa
