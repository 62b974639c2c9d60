// include/cfrp/config.h

// Copyright 2026  The CFRP Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef CFRP_CONFIG_H_
#define CFRP_CONFIG_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace cfrp {

/// Flat key = value store with dotted section names ("encoder.d_model").
/// '#' starts a comment. Keys are kept sorted so serialization is stable.
class Config {
 public:
  static Config Parse(const std::string &text, const std::string &origin = "<string>");
  static Config Load(const std::string &path);
  void Save(const std::string &path) const;
  std::string ToString() const;

  bool Has(const std::string &key) const { return values_.count(key) > 0; }
  void Set(const std::string &key, const std::string &value);
  void Set(const std::string &key, const char *value) { Set(key, std::string(value)); }
  void Set(const std::string &key, double value);
  void Set(const std::string &key, std::int64_t value);
  void Set(const std::string &key, std::uint64_t value);
  void Set(const std::string &key, int value) { Set(key, static_cast<std::int64_t>(value)); }
  void Set(const std::string &key, bool value) { Set(key, std::string(value ? "true" : "false")); }

  /// Typed getters throw ConfigError on malformed values.
  std::string GetString(const std::string &key, const std::string &fallback) const;
  double GetDouble(const std::string &key, double fallback) const;
  std::int64_t GetInt(const std::string &key, std::int64_t fallback) const;
  std::uint64_t GetUint(const std::string &key, std::uint64_t fallback) const;
  bool GetBool(const std::string &key, bool fallback) const;
  std::string Require(const std::string &key) const;

  /// Overwrites entries of this config with those of `other`.
  void Merge(const Config &other);
  const std::map<std::string, std::string> &values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace cfrp

#endif  // CFRP_CONFIG_H_
