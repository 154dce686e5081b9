// Copyright 2026 The lossypir Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lossypir/bytes.hpp"
#include "lossypir/error.hpp"

// `key = value` text configuration. Blank lines and `#` comments are
// ignored; a key may appear once. Typed getters record every value they hand
// out, defaults included, so the fully resolved configuration can be written
// next to a run's outputs.

namespace lossypir {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_words(const std::string& s, char sep = ' ') {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(cur);
    cur.clear();
  };
  for (char c : s) {
    if (c == sep || (sep == ' ' && (c == '\t' || c == ','))) {
      flush();
    } else {
      cur += c;
    }
  }
  flush();
  return out;
}

class RunConfig {
 public:
  RunConfig() = default;

  // Parses text. When `allowed` is nonempty, any other key is rejected.
  static RunConfig parse(const std::string& text, const std::set<std::string>& allowed = {},
                         const std::string& origin = "config") {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    for (std::size_t no = 1; std::getline(in, line); ++no) {
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      const std::string where = origin + ":" + std::to_string(no);
      if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty()) throw ConfigError(where + ": empty key");
      if (!allowed.empty() && !allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
      if (cfg.raw_.count(key)) throw ConfigError(where + ": duplicate key '" + key + "'");
      cfg.raw_[key] = value;
    }
    return cfg;
  }

  static RunConfig load(const std::filesystem::path& path, const std::set<std::string>& allowed = {}) {
    const auto bytes = read_file_bytes(path);
    return parse(std::string(bytes.begin(), bytes.end()), allowed, path.string());
  }

  bool has(const std::string& key) const { return raw_.count(key) > 0; }

  void set(const std::string& key, const std::string& value) { raw_[key] = value; }

  std::string get_string(const std::string& key) const {
    auto it = raw_.find(key);
    if (it == raw_.end()) throw ConfigError("missing required key '" + key + "'");
    resolved_[key] = it->second;
    return it->second;
  }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    if (!has(key)) {
      resolved_[key] = fallback;
      return fallback;
    }
    return get_string(key);
  }

  double get_double(const std::string& key) const { return to_double(key, get_string(key)); }

  double get_double(const std::string& key, double fallback) const {
    if (!has(key)) {
      resolved_[key] = fmt17(fallback);
      return fallback;
    }
    return get_double(key);
  }

  std::int64_t get_int(const std::string& key) const { return to_int(key, get_string(key)); }

  std::int64_t get_int(const std::string& key, std::int64_t fallback) const {
    if (!has(key)) {
      resolved_[key] = std::to_string(fallback);
      return fallback;
    }
    return get_int(key);
  }

  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const {
    const auto v = get_int(key, static_cast<std::int64_t>(fallback));
    if (v < 0) throw ConfigError("key '" + key + "' must be nonnegative");
    return static_cast<std::uint64_t>(v);
  }

  bool get_bool(const std::string& key, bool fallback) const {
    const std::string v = get_string(key, fallback ? "true" : "false");
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("key '" + key + "': expected true or false, got '" + v + "'");
  }

  std::vector<double> get_doubles(const std::string& key) const {
    std::vector<double> out;
    for (const auto& w : split_words(get_string(key))) out.push_back(to_double(key, w));
    if (out.empty()) throw ConfigError("key '" + key + "' has no values");
    return out;
  }

  std::vector<std::int64_t> get_ints(const std::string& key) const {
    std::vector<std::int64_t> out;
    for (const auto& w : split_words(get_string(key))) out.push_back(to_int(key, w));
    if (out.empty()) throw ConfigError("key '" + key + "' has no values");
    return out;
  }

  std::vector<std::int64_t> get_ints(const std::string& key, const std::string& fallback) const {
    if (!has(key)) resolved_[key] = fallback;
    std::vector<std::int64_t> out;
    for (const auto& w : split_words(has(key) ? get_string(key) : fallback)) out.push_back(to_int(key, w));
    return out;
  }

  // Every key read so far with the value actually used, sorted by key.
  std::string resolved_text() const {
    std::string out;
    for (const auto& [k, v] : resolved_) out += k + " = " + v + "\n";
    return out;
  }

  // Keys present in the input that no getter has read.
  std::vector<std::string> unused_keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : raw_) {
      if (!resolved_.count(k)) out.push_back(k);
    }
    return out;
  }

  // Round-trippable formatting for resolved doubles.
  static std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
  }

 private:
  static double to_double(const std::string& key, const std::string& s) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size() || !std::isfinite(v)) {
      throw ConfigError("key '" + key + "': '" + s + "' is not a finite number");
    }
    return v;
  }

  static std::int64_t to_int(const std::string& key, const std::string& s) {
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size()) throw ConfigError("key '" + key + "': '" + s + "' is not an integer");
    return v;
  }

  std::map<std::string, std::string> raw_;
  mutable std::map<std::string, std::string> resolved_;
};

}  // namespace lossypir
