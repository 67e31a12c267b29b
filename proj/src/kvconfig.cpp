#include "reid/kvconfig.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace reid {

namespace {

std::string trim(const std::string& s) {
  const std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::istream& in,
                                     const std::string& origin) {
  KeyValueConfig cfg;
  cfg.origin_ = origin;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ParamError(origin + ":" + std::to_string(line_no) +
                       ": expected key=value");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty())
      throw ParamError(origin + ":" + std::to_string(line_no) +
                       ": empty key");
    if (!cfg.values_.emplace(key, value).second)
      throw ParamError(origin + ":" + std::to_string(line_no) +
                       ": duplicate key '" + key + "'");
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  return parse(in, path);
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  values_[key] = value;
}

std::string KeyValueConfig::get_string(const std::string& key,
                                       const std::string& fallback) {
  consumed_.insert(key);
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) {
  consumed_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  char* end = nullptr;
  const double v = std::strtod(it->second.c_str(), &end);
  if (end == it->second.c_str() || *end != '\0')
    throw ParamError(origin_ + ": key '" + key + "' is not a number: '" +
                     it->second + "'");
  return v;
}

std::size_t KeyValueConfig::get_size(const std::string& key,
                                     std::size_t fallback) {
  return static_cast<std::size_t>(get_u64(key, fallback));
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key,
                                      std::uint64_t fallback) {
  consumed_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(it->second.c_str(), &end, 10);
  if (end == it->second.c_str() || *end != '\0')
    throw ParamError(origin_ + ": key '" + key +
                     "' is not a non-negative integer: '" + it->second + "'");
  return v;
}

int KeyValueConfig::get_int(const std::string& key, int fallback) {
  consumed_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  char* end = nullptr;
  const long v = std::strtol(it->second.c_str(), &end, 10);
  if (end == it->second.c_str() || *end != '\0')
    throw ParamError(origin_ + ": key '" + key + "' is not an integer: '" +
                     it->second + "'");
  return static_cast<int>(v);
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) {
  consumed_.insert(key);
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ParamError(origin_ + ": key '" + key + "' is not a boolean: '" + v +
                   "'");
}

void KeyValueConfig::finish() const {
  std::string unknown;
  for (const auto& [key, value] : values_) {
    if (!consumed_.count(key)) {
      if (!unknown.empty()) unknown += ", ";
      unknown += key;
    }
  }
  if (!unknown.empty())
    throw ParamError(origin_ + ": unknown config keys: " + unknown);
}

}  // namespace reid
