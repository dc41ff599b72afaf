#include "isoha/proxy.hpp"

namespace isoha::proxy {

namespace {

const std::set<std::string> kKeys = {
    "listen",          "admin",          "primary.traffic", "primary.health", "standby.traffic",
    "standby.health",  "mode",           "failback",        "cpu_max_pct",    "poll_interval_ms",
    "fall_count",      "rise_count",     "echo_timeout_ms", "drain",          "event_log",
    "echo_probe",      "header_bytes",   "max_frame",       "connect_timeout_ms",
    "splice_coalesce_ms",
};

net::Endpoint required_endpoint(const KeyValueConfig& kv, const std::string& key) {
  auto v = kv.get(key);
  if (!v) throw ConfigError("missing required key '" + key + "'");
  try {
    return net::Endpoint::parse(*v);
  } catch (const net::NetError& e) {
    throw ConfigError("key '" + key + "': " + e.what());
  }
}

}  // namespace

std::string to_string(DrainPolicy policy) {
  return policy == DrainPolicy::close_on_switch ? "close-on-switch" : "drain";
}

ProxyConfig ProxyConfig::from_config(const KeyValueConfig& kv) {
  for (const auto& [key, _] : kv.values()) {
    if (!kKeys.count(key)) throw ConfigError("unknown key '" + key + "'");
  }
  ProxyConfig c;
  c.listen = required_endpoint(kv, "listen");
  if (kv.has("admin")) c.admin = required_endpoint(kv, "admin");
  c.primary_traffic = required_endpoint(kv, "primary.traffic");
  c.primary_health = required_endpoint(kv, "primary.health");
  c.standby_traffic = required_endpoint(kv, "standby.traffic");
  c.standby_health = required_endpoint(kv, "standby.health");

  if (auto v = kv.get("mode")) {
    auto m = pool::parse_mode(*v);
    if (!m) throw ConfigError("mode must be active-passive or round-robin, got '" + *v + "'");
    c.mode = *m;
  }
  if (auto v = kv.get("failback")) {
    auto f = pool::parse_failback(*v);
    if (!f) throw ConfigError("failback must be manual or auto, got '" + *v + "'");
    c.failback = *f;
  }
  if (auto v = kv.get("drain")) {
    if (*v == "close-on-switch" || *v == "false" || *v == "no") {
      c.drain = DrainPolicy::close_on_switch;
    } else if (*v == "drain" || *v == "true" || *v == "yes") {
      c.drain = DrainPolicy::drain;
    } else {
      throw ConfigError("drain must be close-on-switch or drain, got '" + *v + "'");
    }
  }
  if (auto v = kv.get("echo_probe")) {
    if (*v == "agent") {
      c.direct_echo = false;
    } else if (*v == "direct") {
      c.direct_echo = true;
    } else {
      throw ConfigError("echo_probe must be agent or direct, got '" + *v + "'");
    }
  }
  auto& t = c.thresholds;
  t.cpu_max_pct = kv.get_int("cpu_max_pct", t.cpu_max_pct);
  t.poll_interval_ms = kv.get_int("poll_interval_ms", t.poll_interval_ms);
  t.fall_count = kv.get_int("fall_count", t.fall_count);
  t.rise_count = kv.get_int("rise_count", t.rise_count);
  t.echo_timeout_ms = kv.get_int("echo_timeout_ms", t.echo_timeout_ms);
  try {
    t.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  c.event_log = kv.get_or("event_log", "");
  c.framer.header_bytes = static_cast<std::size_t>(kv.get_int("header_bytes", 2));
  c.framer.max_frame = static_cast<std::size_t>(kv.get_int("max_frame", 4096));
  try {
    c.framer.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  c.connect_timeout_ms = kv.get_int("connect_timeout_ms", c.connect_timeout_ms);
  c.splice_coalesce_ms = kv.get_int("splice_coalesce_ms", c.splice_coalesce_ms);
  return c;
}

ProxyConfig ProxyConfig::parse(std::string_view text) { return from_config(KeyValueConfig::parse(text)); }

ProxyConfig ProxyConfig::load(const std::string& path) {
  try {
    return from_config(KeyValueConfig::load(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace isoha::proxy
