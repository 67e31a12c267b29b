#pragma once

#include <iosfwd>
#include <map>
#include <set>
#include <string>

#include "reid/error.hpp"

namespace reid {

// Flat key=value config text: one pair per line, '#' comments, namespaced
// keys like "train.learning_rate". Every key must be consumed by a getter
// before finish(); unknown keys are rejected.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;
  static KeyValueConfig parse(std::istream& in, const std::string& origin);
  static KeyValueConfig parse_file(const std::string& path);

  // Overrides (e.g. from CLI flags); an override marks nothing consumed.
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_string(const std::string& key, const std::string& fallback);
  double get_double(const std::string& key, double fallback);
  std::size_t get_size(const std::string& key, std::size_t fallback);
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback);
  int get_int(const std::string& key, int fallback);
  bool get_bool(const std::string& key, bool fallback);

  // Throws ParamError listing any key that no getter consumed.
  void finish() const;

 private:
  std::map<std::string, std::string> values_;
  std::set<std::string> consumed_;
  std::string origin_ = "<config>";
};

}  // namespace reid
