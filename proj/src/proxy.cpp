#include "isoha/proxy.hpp"

#include <poll.h>

#include <algorithm>
#include <array>
#include <cerrno>

#include "isoha/log.hpp"

namespace isoha::proxy {

namespace {

constexpr char kRoutingMarker = '|';
constexpr std::size_t kFinishedKept = 10000;

// Waits for readability on `fds`; returns their revents. Empty on EINTR.
std::vector<short> wait_readable(const std::vector<int>& fds, int timeout_ms) {
  std::vector<pollfd> p;
  for (int fd : fds) p.push_back({fd, POLLIN, 0});
  int rc = ::poll(p.data(), p.size(), timeout_ms);
  std::vector<short> out(fds.size(), 0);
  if (rc < 0) {
    if (errno == EINTR) return out;
    throw net::NetError("poll failed");
  }
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = p[i].revents;
  return out;
}

struct ReadResult {
  bool closed = false;
  std::vector<std::string> frames;
};

ReadResult read_frames(net::Socket& sock, framing::FrameBuffer& buffer) {
  char buf[16384];
  auto n = sock.recv_some(buf, sizeof buf, std::nullopt);
  if (!n || *n == 0) return {true, {}};
  return {false, buffer.push({buf, *n})};
}

}  // namespace

std::string to_string(SessionEnd end) {
  switch (end) {
    case SessionEnd::client_closed: return "client_closed";
    case SessionEnd::backend_closed: return "backend_closed";
    case SessionEnd::backend_connect_failed: return "backend_connect_failed";
    case SessionEnd::switchover: return "switchover";
    case SessionEnd::framing_error: return "framing_error";
    case SessionEnd::proxy_stopped: return "proxy_stopped";
    case SessionEnd::refused: return "refused";
  }
  return "?";
}

struct FailoverProxy::Session {
  net::Socket client;
  std::mutex mu;
  std::vector<std::shared_ptr<net::Socket>> backends;
  std::optional<std::string> member;
  std::atomic<bool> switched{false};
  std::thread::id thread_id;
  SessionSummary summary;

  explicit Session(net::Socket s) : client(std::move(s)) {}

  void add_backend(std::shared_ptr<net::Socket> b) {
    std::lock_guard lock(mu);
    backends.push_back(std::move(b));
  }

  void shutdown_all() {
    std::lock_guard lock(mu);
    client.shutdown();
    for (auto& b : backends) b->shutdown();
  }
};

FailoverProxy::FailoverProxy(ProxyConfig config, std::shared_ptr<monitor::HealthSource> source,
                             std::shared_ptr<monitor::Clock> clock)
    : config_(std::move(config)) {
  if (!source) source = std::make_shared<monitor::HttpHealthSource>(config_.thresholds, config_.direct_echo, config_.framer);
  if (!clock) clock = std::make_shared<monitor::SteadyClock>();
  pool::PoolMember primary{"primary", config_.primary_traffic, config_.primary_health, pool::MemberRole::primary, {}};
  pool::PoolMember standby{"standby", config_.standby_traffic, config_.standby_health, pool::MemberRole::standby, {}};
  monitor_ = std::make_unique<monitor::Monitor>(pool::Pool(primary, standby, config_.mode, config_.failback),
                                                config_.thresholds, std::move(source), std::move(clock));
  monitor_->add_event_sink([this](const pool::SwitchEvent& ev) { on_switch(ev); });
}

FailoverProxy::~FailoverProxy() { stop(); }

void FailoverProxy::start(bool run_monitor) {
  if (!config_.event_log.empty()) {
    event_log_.open(config_.event_log, std::ios::app);
    if (!event_log_) throw net::NetError("cannot open event log " + config_.event_log);
  }
  listener_ = net::Socket::listen(config_.listen);
  port_ = listener_.local_port();
  net::Endpoint admin = config_.admin.value_or(net::Endpoint{config_.listen.host, static_cast<std::uint16_t>(port_ + 1)});
  admin_ = std::make_unique<net::LineServer>(admin, [this](std::string_view line) { return handle_admin(line); });
  acceptor_ = std::thread([this] { accept_loop(); });
  if (run_monitor) monitor_->start();
  log::get()->info("proxy listening on {} admin={} mode={} drain={}", port_, admin_->port(),
                   pool::to_string(config_.mode), to_string(config_.drain));
}

void FailoverProxy::stop() {
  if (stopping_.exchange(true)) return;
  monitor_->stop();
  if (admin_) admin_->stop();
  listener_.shutdown();
  if (acceptor_.joinable()) acceptor_.join();
  std::vector<std::thread> threads;
  {
    std::lock_guard lock(sessions_mu_);
    for (auto& s : sessions_) s->shutdown_all();
    threads.swap(session_threads_);
  }
  for (auto& t : threads) t.join();
  listener_.close();
}

std::uint16_t FailoverProxy::admin_port() const { return admin_ ? admin_->port() : 0; }

void FailoverProxy::accept_loop() {
  while (!stopping_) {
    net::Socket s = listener_.accept();
    if (!s.valid()) break;
    pool::Pool snapshot = monitor_->snapshot();
    if (!snapshot.active_id()) {
      {
        std::lock_guard lock(stats_mu_);
        ++stats_.sessions_refused;
      }
      std::lock_guard lock(sessions_mu_);
      finished_.push_back({0, 0, SessionEnd::refused, std::nullopt});
      continue;  // closing the socket refuses the session
    }
    auto session = std::make_shared<Session>(std::move(s));
    {
      std::lock_guard lock(stats_mu_);
      ++stats_.sessions_admitted;
    }
    std::lock_guard lock(sessions_mu_);
    if (stopping_) break;
    // Reap threads of sessions that already finished.
    std::erase_if(session_threads_, [this](std::thread& t) {
      bool done = std::none_of(sessions_.begin(), sessions_.end(),
                               [&](const auto& live) { return live->thread_id == t.get_id(); });
      if (done) t.join();
      return done;
    });
    sessions_.push_back(session);
    session_threads_.emplace_back([this, session] { run_session(session); });
    session->thread_id = session_threads_.back().get_id();
  }
}

void FailoverProxy::run_session(std::shared_ptr<Session> session) {
  {
    // thread_id is written by the acceptor under this lock.
    std::lock_guard lock(sessions_mu_);
  }
  try {
    if (config_.mode == pool::Mode::active_passive) {
      forward_session(*session);
    } else {
      splice_round_robin(*session);
    }
  } catch (const framing::FramingError& e) {
    log::get()->debug("session framing error: {}", e.what());
    session->summary.terminated_by = SessionEnd::framing_error;
  } catch (const net::NetError& e) {
    log::get()->debug("session io error: {}", e.what());
    session->summary.terminated_by = session->switched ? SessionEnd::switchover : SessionEnd::backend_closed;
  }
  if (stopping_) session->summary.terminated_by = SessionEnd::proxy_stopped;
  session->shutdown_all();
  SessionSummary summary = session->summary;
  finish(std::move(session), summary);
}

void FailoverProxy::finish(std::shared_ptr<Session> session, SessionSummary summary) {
  {
    std::lock_guard lock(stats_mu_);
    if (summary.terminated_by == SessionEnd::refused) {
      --stats_.sessions_admitted;
      ++stats_.sessions_refused;
    }
  }
  std::lock_guard lock(sessions_mu_);
  finished_.push_back(summary);
  while (finished_.size() > kFinishedKept) finished_.pop_front();
  std::erase(sessions_, session);
}

void FailoverProxy::count_frame(SessionSummary& summary, bool inbound) {
  ++(inbound ? summary.frames_in : summary.frames_out);
  std::lock_guard lock(stats_mu_);
  ++(inbound ? stats_.frames_in : stats_.frames_out);
}

void FailoverProxy::forward_session(Session& session) {
  SessionSummary& summary = session.summary;
  framing::FrameBuffer from_client(config_.framer);
  framing::FrameBuffer from_backend(config_.framer);

  // The session is pinned to whichever member is active at its first frame.
  auto first = wait_readable({session.client.fd()}, -1);
  ReadResult initial = read_frames(session.client, from_client);
  if (initial.closed) return;

  pool::Pool snapshot = monitor_->snapshot();
  const pool::PoolMember* active = snapshot.active();
  if (!active) {
    summary.terminated_by = SessionEnd::refused;
    return;
  }
  summary.member = active->id;
  auto backend = std::make_shared<net::Socket>();
  try {
    *backend = net::Socket::connect(active->traffic, net::Millis(config_.connect_timeout_ms));
  } catch (const net::NetError& e) {
    log::get()->warn("session connect to {} failed: {}", active->id, e.what());
    monitor_->report_connect_failure(active->id);
    summary.terminated_by = SessionEnd::backend_connect_failed;
    return;
  }
  {
    std::lock_guard lock(session.mu);
    session.member = active->id;
  }
  session.add_backend(backend);
  // A switch may have been published between the snapshot and the pin.
  const bool moved = config_.drain == DrainPolicy::close_on_switch && monitor_->snapshot().active_id() != active->id;
  if (session.switched || moved) {
    summary.terminated_by = SessionEnd::switchover;
    return;
  }

  auto relay_to_backend = [&](const std::vector<std::string>& frames) {
    for (const auto& payload : frames) {
      backend->send_all(framing::encode_frame(payload, config_.framer));
      count_frame(summary, true);
    }
  };
  relay_to_backend(initial.frames);

  for (;;) {
    auto ready = wait_readable({session.client.fd(), backend->fd()}, -1);
    if (ready[0]) {
      ReadResult r = read_frames(session.client, from_client);
      relay_to_backend(r.frames);
      if (r.closed) {
        summary.terminated_by = session.switched ? SessionEnd::switchover : SessionEnd::client_closed;
        return;
      }
    }
    if (ready[1]) {
      ReadResult r = read_frames(*backend, from_backend);
      for (const auto& payload : r.frames) {
        session.client.send_all(framing::encode_frame(payload, config_.framer));
        count_frame(summary, false);
      }
      if (r.closed) {
        summary.terminated_by = session.switched ? SessionEnd::switchover : SessionEnd::backend_closed;
        return;
      }
    }
  }
}

void FailoverProxy::splice_round_robin(Session& session) {
  SessionSummary& summary = session.summary;
  framing::FrameBuffer from_client(config_.framer);

  wait_readable({session.client.fd()}, -1);
  ReadResult initial = read_frames(session.client, from_client);
  if (initial.closed) return;

  struct Leg {
    std::string id;
    std::shared_ptr<net::Socket> sock;
    framing::FrameBuffer buffer;
    std::deque<std::string> pending;
    std::uint64_t outstanding = 0;
  };
  std::vector<Leg> legs;
  pool::Pool snapshot = monitor_->snapshot();
  for (const auto& m : snapshot.members()) {
    if (!m.up()) continue;
    try {
      auto sock = std::make_shared<net::Socket>(net::Socket::connect(m.traffic, net::Millis(config_.connect_timeout_ms)));
      session.add_backend(sock);
      legs.push_back({m.id, sock, framing::FrameBuffer(config_.framer), {}, 0});
    } catch (const net::NetError&) {
      monitor_->report_connect_failure(m.id);
    }
  }
  if (legs.empty()) {
    summary.terminated_by = SessionEnd::backend_connect_failed;
    return;
  }

  std::size_t next_leg = 0;
  auto spray = [&](const std::vector<std::string>& frames) {
    for (const auto& payload : frames) {
      Leg& leg = legs[next_leg++ % legs.size()];
      std::string tagged = payload;
      if (tagged.size() < config_.framer.max_frame) tagged.push_back(kRoutingMarker);
      leg.sock->send_all(framing::encode_frame(tagged, config_.framer));
      ++leg.outstanding;
      count_frame(summary, true);
    }
  };
  spray(initial.frames);

  auto drain_leg = [&](Leg& leg) -> bool {
    ReadResult r = read_frames(*leg.sock, leg.buffer);
    for (auto& f : r.frames) {
      leg.pending.push_back(std::move(f));
      if (leg.outstanding > 0) --leg.outstanding;
    }
    return r.closed;
  };
  auto send_client = [&](const std::string& payload) {
    session.client.send_all(framing::encode_frame(payload, config_.framer));
    count_frame(summary, false);
  };

  for (;;) {
    std::vector<int> fds{session.client.fd()};
    for (const auto& leg : legs) fds.push_back(leg.sock->fd());
    auto ready = wait_readable(fds, -1);

    if (ready[0]) {
      ReadResult r = read_frames(session.client, from_client);
      spray(r.frames);
      if (r.closed) {
        summary.terminated_by = SessionEnd::client_closed;
        return;
      }
    }
    bool any_reply = false;
    for (std::size_t i = 0; i < legs.size(); ++i) {
      if (!ready[i + 1]) continue;
      any_reply = true;
      if (drain_leg(legs[i])) {
        summary.terminated_by = session.switched ? SessionEnd::switchover : SessionEnd::backend_closed;
        return;
      }
    }
    if (!any_reply) continue;

    // Same-tick collection: give a leg that still owes replies a short
    // window to deliver before replies are emitted.
    if (legs.size() == 2) {
      for (int k = 0; k < 2; ++k) {
        Leg& quiet = legs[k];
        Leg& busy = legs[1 - k];
        if (quiet.pending.empty() && quiet.outstanding > 0 && !busy.pending.empty()) {
          auto r = wait_readable({quiet.sock->fd()}, config_.splice_coalesce_ms);
          if (r[0] && drain_leg(quiet)) {
            summary.terminated_by = SessionEnd::backend_closed;
            return;
          }
        }
      }
      while (!legs[0].pending.empty() && !legs[1].pending.empty()) {
        std::string merged = legs[0].pending.front() + legs[1].pending.front();
        legs[0].pending.pop_front();
        legs[1].pending.pop_front();
        if (merged.size() <= config_.framer.max_frame) {
          {
            std::lock_guard lock(stats_mu_);
            ++stats_.combined_frames;
          }
          send_client(merged);
        } else {
          send_client(merged.substr(0, merged.size() / 2));
          send_client(merged.substr(merged.size() / 2));
        }
      }
    }
    for (auto& leg : legs) {
      while (!leg.pending.empty()) {
        send_client(leg.pending.front());
        leg.pending.pop_front();
      }
    }
  }
}

void FailoverProxy::on_switch(const pool::SwitchEvent& ev) {
  {
    std::lock_guard lock(log_mu_);
    if (event_log_.is_open()) {
      event_log_ << ev.to_log_line() << '\n';
      event_log_.flush();
    }
  }
  if (config_.drain != DrainPolicy::close_on_switch || config_.mode != pool::Mode::active_passive || !ev.from) return;
  std::lock_guard lock(sessions_mu_);
  for (auto& s : sessions_) {
    std::optional<std::string> pinned;
    {
      std::lock_guard slock(s->mu);
      pinned = s->member;
    }
    if (pinned == ev.from) {
      s->switched = true;
      s->shutdown_all();
    }
  }
}

ProxyStats FailoverProxy::stats() const {
  std::lock_guard lock(stats_mu_);
  return stats_;
}

std::vector<SessionSummary> FailoverProxy::finished_sessions() const {
  std::lock_guard lock(sessions_mu_);
  return {finished_.begin(), finished_.end()};
}

std::size_t FailoverProxy::open_sessions() const {
  std::lock_guard lock(sessions_mu_);
  return sessions_.size();
}

std::string FailoverProxy::status_line() const { return monitor_->snapshot().status_line(); }

std::string FailoverProxy::handle_admin(std::string_view line) {
  if (line == "status") return status_line();
  if (line == "events") {
    std::string out;
    for (const auto& ev : monitor_->events()) {
      if (!out.empty()) out += " | ";
      out += ev.to_log_line();
    }
    return out.empty() ? "none" : out;
  }
  if (line == "stats") {
    ProxyStats s = stats();
    return "admitted=" + std::to_string(s.sessions_admitted) + " refused=" + std::to_string(s.sessions_refused) +
           " frames_in=" + std::to_string(s.frames_in) + " frames_out=" + std::to_string(s.frames_out) +
           " combined=" + std::to_string(s.combined_frames);
  }
  if (line.substr(0, 7) == "switch ") {
    try {
      auto ev = monitor_->force_active(std::string(line.substr(7)));
      return ev ? "ok " + ev->to_log_line() : "ok unchanged";
    } catch (const pool::PoolError& e) {
      return std::string("err ") + e.what();
    }
  }
  return "err unknown command";
}

}  // namespace isoha::proxy
