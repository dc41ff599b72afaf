#pragma once

// Line-oriented `key = value` files with `#` comments.

#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>

namespace isoha {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class KeyValueConfig {
 public:
  // Rejects duplicate keys and keys outside `allowed` (when nonempty).
  static KeyValueConfig parse(std::string_view text, const std::set<std::string>& allowed = {});
  static KeyValueConfig load(const std::string& path, const std::set<std::string>& allowed = {});

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::optional<std::string> get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace isoha
