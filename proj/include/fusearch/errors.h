// Copyright 2026 The Fusearch Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FUSEARCH_ERRORS_H_
#define FUSEARCH_ERRORS_H_

#include <stdexcept>
#include <string>

namespace fusearch {

// A caller broke a documented precondition (shape mismatch, backward before
// forward, out-of-range step, ...).
class ContractViolation : public std::logic_error {
 public:
  explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

// A genome could not be turned into a graph (width overflow, internal cycle).
class CompileError : public std::runtime_error {
 public:
  explicit CompileError(const std::string& what) : std::runtime_error(what) {}
};

// Bad configuration: unknown keys, malformed values, inconsistent settings.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed serialized input (genome, checkpoint, dataset, log).
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace fusearch

#endif  // FUSEARCH_ERRORS_H_
