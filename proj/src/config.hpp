/*
 * Copyright 2026 The wsrnet Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
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
#include <string>
#include <vector>

#include "common.hpp"

WSR_NS_BEGIN

enum class KeyType { Int, Real, Bool, Text, Choice };

struct ConfigKey {
  const char* name;
  KeyType type;
  const char* default_value;
  bool published;  ///< value taken from the published method rather than chosen here
  const char* help;
  std::vector<std::string> choices;  ///< for KeyType::Choice
};

/// Every recognised key, in echo order.
const std::vector<ConfigKey>& config_keys();

/// Effective run configuration: defaults overridden by a `key = value` file
/// and command-line assignments. Unknown keys and malformed values throw
/// ContractViolation.
class RunConfig {
 public:
  RunConfig();

  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::string& path);

  void set(const std::string& key, const std::string& value);
  /// Applies every `key = value` line of `text` ('#' starts a comment).
  void merge_text(const std::string& text);

  const std::string& get(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  double get_real(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  /// Canonical `key = value` listing of every key.
  std::string echo() const;

  /// Key listing with defaults and provenance, for --help.
  static std::string help_text();

  bool operator==(const RunConfig&) const = default;

 private:
  std::map<std::string, std::string> values_;
};

WSR_NS_END
