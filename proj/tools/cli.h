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

#ifndef FUSEARCH_TOOLS_CLI_H_
#define FUSEARCH_TOOLS_CLI_H_

#include <atomic>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace fusearch::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;
inline constexpr int kExitInterrupted = 4;

inline constexpr const char* kEnvPrefix = "FUSEARCH_";

// Resolved settings, keyed "section.key". Values are kept as text; typed
// access validates on read.
class Settings {
 public:
  Settings();  // defaults

  // Throws ConfigError on unknown keys.
  void Set(const std::string& key, const std::string& value);
  void LoadIni(const std::string& path);
  // Applies FUSEARCH_<SECTION>_<KEY> variables (upper case). Unknown
  // FUSEARCH_ variables are configuration errors.
  void LoadEnvironment(const std::map<std::string, std::string>& env);

  const std::string& Get(const std::string& key) const;
  int GetInt(const std::string& key) const;
  std::int64_t GetInt64(const std::string& key) const;
  std::uint64_t GetUint64(const std::string& key) const;
  double GetDouble(const std::string& key) const;

  // INI text of every key, grouped by section.
  std::string ToIni() const;

 private:
  std::map<std::string, std::string> values_;
};

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

// Entry point shared by the executable and the tests. `args` excludes the
// program name. `interrupt` may be null.
int Run(const std::vector<std::string>& args, const std::map<std::string, std::string>& env,
        Streams io, const std::atomic<bool>* interrupt = nullptr);

}  // namespace fusearch::cli

#endif  // FUSEARCH_TOOLS_CLI_H_
