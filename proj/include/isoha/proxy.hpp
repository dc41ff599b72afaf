#pragma once

// Failover proxy: admits client sessions, relays framed ISO traffic to the
// active pool member, and runs the health monitor that decides which member
// is active. ROUND_ROBIN_PER_MESSAGE mode is the deliberately defective
// per-message splice kept as a measurement baseline.

#include <atomic>
#include <cstdint>
#include <deque>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "isoha/kv_config.hpp"
#include "isoha/monitor.hpp"
#include "isoha/net.hpp"
#include "isoha/pool.hpp"

namespace isoha::proxy {

enum class DrainPolicy { close_on_switch, drain };

struct ProxyConfig {
  net::Endpoint listen{"127.0.0.1", 0};
  std::optional<net::Endpoint> admin;  // status/switch port; listen port + 1 when unset
  net::Endpoint primary_traffic;
  net::Endpoint primary_health;
  net::Endpoint standby_traffic;
  net::Endpoint standby_health;
  pool::Mode mode = pool::Mode::active_passive;
  pool::Failback failback = pool::Failback::manual;
  health::HealthThresholds thresholds;
  DrainPolicy drain = DrainPolicy::close_on_switch;
  bool direct_echo = false;
  std::string event_log;  // empty: no file
  framing::FramerConfig framer;
  int connect_timeout_ms = 1000;
  int splice_coalesce_ms = 2;  // replies within this window count as one tick

  static ProxyConfig parse(std::string_view text);
  static ProxyConfig load(const std::string& path);
  static ProxyConfig from_config(const KeyValueConfig& kv);
};

std::string to_string(DrainPolicy policy);

enum class SessionEnd {
  client_closed,
  backend_closed,
  backend_connect_failed,
  switchover,
  framing_error,
  proxy_stopped,
  refused,
};

std::string to_string(SessionEnd end);

struct SessionSummary {
  std::uint64_t frames_in = 0;   // client -> backend
  std::uint64_t frames_out = 0;  // backend -> client
  SessionEnd terminated_by = SessionEnd::client_closed;
  std::optional<std::string> member;  // pinned member (active-passive)
};

struct ProxyStats {
  std::uint64_t sessions_admitted = 0;
  std::uint64_t sessions_refused = 0;
  std::uint64_t frames_in = 0;
  std::uint64_t frames_out = 0;
  std::uint64_t combined_frames = 0;  // splice mode merges
};

class FailoverProxy {
 public:
  // Defaults: HTTP health polling and the steady clock.
  explicit FailoverProxy(ProxyConfig config, std::shared_ptr<monitor::HealthSource> source = nullptr,
                         std::shared_ptr<monitor::Clock> clock = nullptr);
  ~FailoverProxy();
  FailoverProxy(const FailoverProxy&) = delete;
  FailoverProxy& operator=(const FailoverProxy&) = delete;

  // Binds the traffic and admin ports; `run_monitor` starts the poll loop.
  void start(bool run_monitor = true);
  void stop();

  std::uint16_t port() const { return port_; }
  std::uint16_t admin_port() const;
  net::Endpoint endpoint() const { return {"127.0.0.1", port_}; }
  net::Endpoint admin_endpoint() const { return {"127.0.0.1", admin_port()}; }

  monitor::Monitor& monitor() { return *monitor_; }
  ProxyStats stats() const;
  std::vector<SessionSummary> finished_sessions() const;
  std::size_t open_sessions() const;
  std::string status_line() const;
  std::string handle_admin(std::string_view line);

 private:
  struct Session;

  void accept_loop();
  void run_session(std::shared_ptr<Session> session);
  void forward_session(Session& session);
  void splice_round_robin(Session& session);
  void count_frame(SessionSummary& summary, bool inbound);
  void on_switch(const pool::SwitchEvent& ev);
  void finish(std::shared_ptr<Session> session, SessionSummary summary);

  ProxyConfig config_;
  std::unique_ptr<monitor::Monitor> monitor_;
  net::Socket listener_;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread acceptor_;
  std::unique_ptr<net::LineServer> admin_;
  std::ofstream event_log_;
  std::mutex log_mu_;

  mutable std::mutex sessions_mu_;
  std::vector<std::shared_ptr<Session>> sessions_;
  std::vector<std::thread> session_threads_;
  std::deque<SessionSummary> finished_;

  mutable std::mutex stats_mu_;
  ProxyStats stats_;
};

}  // namespace isoha::proxy
