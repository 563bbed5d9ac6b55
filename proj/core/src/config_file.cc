#include "wavernn/config_file.h"

#include <charconv>
#include <fstream>
#include <sstream>

#include "wavernn/errors.h"

namespace wavernn {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

InputError bad_value(const std::string& key, const std::string& value,
                     const char* expected) {
  return InputError("config key " + key + ": '" + value + "' is not " + expected);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text) {
  KeyValueConfig cfg;
  std::istringstream in(text);
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InputError("config line " + std::to_string(n) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw InputError("config line " + std::to_string(n) + ": empty key");
    if (!cfg.values_.emplace(key, value).second) {
      throw InputError("config line " + std::to_string(n) + ": duplicate key " + key);
    }
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

const std::string* KeyValueConfig::find(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return nullptr;
  used_.insert(key);
  return &it->second;
}

std::string KeyValueConfig::get(const std::string& key,
                                const std::string& fallback) const {
  const std::string* v = find(key);
  return v ? *v : fallback;
}

std::size_t KeyValueConfig::get_size(const std::string& key,
                                     std::size_t fallback) const {
  const std::string* v = find(key);
  if (!v) return fallback;
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || ptr != v->data() + v->size()) {
    throw bad_value(key, *v, "a non-negative integer");
  }
  return out;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  const std::string* v = find(key);
  if (!v) return fallback;
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || ptr != v->data() + v->size()) {
    throw bad_value(key, *v, "a number");
  }
  return out;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  const std::string* v = find(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  throw bad_value(key, *v, "a boolean");
}

std::vector<std::string> KeyValueConfig::unused_keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_) {
    if (!used_.count(k)) out.push_back(k);
  }
  return out;
}

}  // namespace wavernn
