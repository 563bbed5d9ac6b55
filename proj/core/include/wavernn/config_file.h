#pragma once

// Plain-text configuration: one `key = value` per line, `#` starts a
// comment, blank lines are ignored. Keys may appear once.

#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace wavernn {

class KeyValueConfig {
 public:
  // Throws InputError naming the line on malformed input.
  static KeyValueConfig parse(const std::string& text);
  static KeyValueConfig load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  // Typed lookups return `fallback` when the key is absent and throw
  // InputError when the value does not parse.
  std::string get(const std::string& key, const std::string& fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  // Keys that no getter asked for, to flag typos.
  std::vector<std::string> unused_keys() const;

 private:
  const std::string* find(const std::string& key) const;

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

}  // namespace wavernn
