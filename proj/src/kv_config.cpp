#include "isoha/kv_config.hpp"

#include <fstream>
#include <sstream>

#include "isoha/fixed.hpp"

namespace isoha {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

double Fixed::value() const {
  double v = static_cast<double>(units);
  for (int i = 0; i < places; ++i) v /= 10.0;
  return v;
}

std::string Fixed::str() const {
  const bool neg = units < 0;
  std::string digits = std::to_string(neg ? -units : units);
  if (places > 0) {
    if (digits.size() <= static_cast<std::size_t>(places)) {
      digits.insert(0, static_cast<std::size_t>(places) + 1 - digits.size(), '0');
    }
    digits.insert(digits.size() - static_cast<std::size_t>(places), ".");
  }
  return neg ? "-" + digits : digits;
}

KeyValueConfig KeyValueConfig::parse(std::string_view text, const std::set<std::string>& allowed) {
  KeyValueConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    const std::string ctx = "line " + std::to_string(line_no);
    if (eq == std::string::npos) throw ConfigError(ctx + ": expected key = value");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) throw ConfigError(ctx + ": empty key");
    if (!allowed.empty() && !allowed.count(key)) throw ConfigError(ctx + ": unknown key '" + key + "'");
    if (!cfg.values_.emplace(key, value).second) throw ConfigError(ctx + ": duplicate key '" + key + "'");
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::string& path, const std::set<std::string>& allowed) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse(ss.str(), allowed);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::optional<std::string> KeyValueConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string KeyValueConfig::get_or(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

int KeyValueConfig::get_int(const std::string& key, int fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  try {
    std::size_t pos = 0;
    int out = std::stoi(*v, &pos);
    if (pos != v->size()) throw std::invalid_argument(*v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected an integer, got '" + *v + "'");
  }
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  try {
    std::size_t pos = 0;
    double out = std::stod(*v, &pos);
    if (pos != v->size()) throw std::invalid_argument(*v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a number, got '" + *v + "'");
  }
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "yes" || *v == "1" || *v == "on") return true;
  if (*v == "false" || *v == "no" || *v == "0" || *v == "off") return false;
  throw ConfigError("key '" + key + "': expected a boolean, got '" + *v + "'");
}

}  // namespace isoha
