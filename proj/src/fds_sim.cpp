#include "isoha/fds_sim.hpp"

#include <algorithm>
#include <sstream>

#include "isoha/log.hpp"

namespace isoha::fds {

using iso8583::FieldDictionary;

struct FdsSim::Connection {
  net::Socket sock;
  std::mutex write_mu;
  std::atomic<bool> open{true};

  explicit Connection(net::Socket s) : sock(std::move(s)) {}
};

std::string BackendStats::to_line() const {
  std::ostringstream out;
  out << "received=" << received << " answered=" << answered << " rejected=" << rejected_queue_full
      << " expired=" << expired << " nonstandard=" << nonstandard << " stopped=" << dropped_stopped
      << " unsupported=" << unsupported << " offered_tps=" << offered_tps;
  return out.str();
}

FdsSim::FdsSim(SimConfig config) : config_(std::move(config)), service_(config_) { config_.validate(); }

FdsSim::~FdsSim() { stop(); }

void FdsSim::start() {
  listener_ = net::Socket::listen(config_.listen);
  traffic_port_ = listener_.local_port();
  started_ms_ = net::steady_ms();

  for (int i = 0; i < config_.workers; ++i) workers_.emplace_back([this] { worker_loop(); });
  acceptor_ = std::thread([this] { accept_loop(); });

  health::AgentConfig agent;
  agent.listen = config_.health;
  agent.backend = traffic_endpoint();
  agent.echo_timeout_ms = config_.echo_timeout_ms;
  agent.framer = config_.framer;
  auto cpu = std::make_shared<health::FunctionCpuProvider>([this]() -> std::optional<int> { return current_cpu(); });
  agent_ = std::make_unique<health::HealthAgent>(agent, cpu);
  agent_->start();

  control_ = std::make_unique<net::LineServer>(config_.control,
                                               [this](std::string_view line) { return handle_control(line); });
  log::get()->info("fds-sim '{}' traffic={} health={} control={} capacity={:.0f} tps", config_.id,
                   traffic_port_, health_port(), control_port(), config_.capacity_tps());
}

void FdsSim::stop() {
  if (stopping_.exchange(true)) return;
  if (control_) control_->stop();
  if (agent_) agent_->stop();
  listener_.shutdown();
  if (acceptor_.joinable()) acceptor_.join();
  {
    std::lock_guard lock(conn_mu_);
    for (auto& c : connections_) c->sock.shutdown();
  }
  queue_cv_.notify_all();
  for (auto& t : workers_) t.join();
  workers_.clear();
  std::vector<std::thread> readers;
  {
    std::lock_guard lock(conn_mu_);
    readers.swap(readers_);
  }
  for (auto& t : readers) t.join();
  listener_.close();
}

std::uint16_t FdsSim::health_port() const { return agent_ ? agent_->port() : 0; }
std::uint16_t FdsSim::control_port() const { return control_ ? control_->port() : 0; }

void FdsSim::accept_loop() {
  while (!stopping_) {
    net::Socket s = listener_.accept();
    if (!s.valid()) break;
    auto conn = std::make_shared<Connection>(std::move(s));
    std::lock_guard lock(conn_mu_);
    if (stopping_) break;
    // Drop bookkeeping for connections that have gone away.
    std::erase_if(connections_, [](const auto& c) { return !c->open; });
    connections_.push_back(conn);
    readers_.emplace_back([this, conn] { read_loop(conn); });
  }
}

void FdsSim::read_loop(std::shared_ptr<Connection> conn) {
  framing::FrameBuffer buffer(config_.framer);
  const FieldDictionary& dict = FieldDictionary::default_dictionary();
  char buf[8192];
  try {
    for (;;) {
      auto n = conn->sock.recv_some(buf, sizeof buf, std::nullopt);
      if (!n || *n == 0) break;
      for (std::string& payload : buffer.push({buf, *n})) {
        const std::int64_t now = net::steady_ms();
        iso8583::Decoded decoded = iso8583::decode_message(payload, dict);
        bool stopped;
        {
          std::lock_guard lock(fault_mu_);
          stopped = faults_.stop_processing;
        }
        {
          std::lock_guard lock(stats_mu_);
          ++stats_.received;
          recent_arrivals_.push_back(now);
          offered_rate(now);
          if (config_.record_digests) received_digests_.push_back(fnv1a64(payload));
          const std::string verdict = iso8583::to_string(decoded.verdict);
          auto it = std::find_if(verdicts_.begin(), verdicts_.end(), [&](const auto& v) { return v.first == verdict; });
          if (it == verdicts_.end()) {
            verdicts_.emplace_back(verdict, 1);
          } else {
            ++it->second;
          }
          if (!decoded.verdict.is_standard()) {
            ++stats_.nonstandard;
            continue;
          }
          if (stopped) {
            ++stats_.dropped_stopped;
            continue;
          }
        }
        std::lock_guard lock(queue_mu_);
        // Jobs that an idle worker is about to pick up do not hold a slot.
        if (queue_.size() >= static_cast<std::size_t>(config_.queue_capacity + idle_workers_)) {
          std::lock_guard slock(stats_mu_);
          ++stats_.rejected_queue_full;
          continue;
        }
        queue_.push_back(Job{conn, std::move(decoded.message), now});
        queue_cv_.notify_one();
      }
    }
  } catch (const std::exception& e) {
    log::get()->debug("fds-sim '{}' connection closed: {}", config_.id, e.what());
  }
  conn->open = false;
  conn->sock.shutdown();
}

void FdsSim::worker_loop() {
  const FieldDictionary& dict = FieldDictionary::default_dictionary();
  for (;;) {
    Job job;
    double service_ms;
    {
      std::unique_lock lock(queue_mu_);
      ++idle_workers_;
      queue_cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
      --idle_workers_;
      if (stopping_) return;
      job = std::move(queue_.front());
      queue_.pop_front();
      const std::int64_t now = net::steady_ms();
      if (now - job.arrived_ms > config_.queue_timeout_ms) {
        std::lock_guard slock(stats_mu_);
        ++stats_.expired;
        continue;
      }
      service_ms = service_.sample(static_cast<double>(now - started_ms_));
    }
    std::this_thread::sleep_for(std::chrono::microseconds(static_cast<std::int64_t>(service_ms * 1000.0)));

    auto reply = handle_message(job.message);
    if (!reply) {
      std::lock_guard slock(stats_mu_);
      ++stats_.unsupported;
      continue;
    }
    const std::string payload = iso8583::encode_message(*reply, dict);
    if (!job.conn->open) continue;
    // Counted before the write, in wire order, so a reader that has seen
    // the reply also sees it here. Rolled back if the write fails.
    std::lock_guard wlock(job.conn->write_mu);
    {
      std::lock_guard slock(stats_mu_);
      ++stats_.answered;
      if (config_.record_digests) sent_digests_.push_back(fnv1a64(payload));
    }
    try {
      job.conn->sock.send_all(framing::encode_frame(payload, config_.framer));
    } catch (const net::NetError&) {
      job.conn->open = false;
      std::lock_guard slock(stats_mu_);
      --stats_.answered;
      if (config_.record_digests) sent_digests_.pop_back();
    }
  }
}

double FdsSim::offered_rate(std::int64_t now_ms) const {
  // Caller holds stats_mu_.
  while (!recent_arrivals_.empty() && recent_arrivals_.front() <= now_ms - 1000) recent_arrivals_.pop_front();
  return static_cast<double>(recent_arrivals_.size());
}

int FdsSim::current_cpu() const {
  double rate;
  {
    std::lock_guard lock(stats_mu_);
    rate = offered_rate(net::steady_ms());
  }
  return cpu_load(rate * config_.cpu_tps_scale, faults(), config_.cpu);
}

void FdsSim::inject_fault(FaultKind kind, int pct) {
  std::lock_guard lock(fault_mu_);
  switch (kind) {
    case FaultKind::stop_processing: faults_.stop_processing = true; break;
    case FaultKind::resume: faults_.stop_processing = false; break;
    case FaultKind::cpu_override:
      if (pct < 0 || pct > 100) throw std::invalid_argument("cpu override must be in 0..100");
      faults_.cpu_override = pct;
      break;
    case FaultKind::clear_cpu: faults_.cpu_override.reset(); break;
  }
  log::get()->info("fds-sim '{}' fault: stop={} cpu_override={}", config_.id, faults_.stop_processing,
                   faults_.cpu_override ? std::to_string(*faults_.cpu_override) : "none");
}

FaultState FdsSim::faults() const {
  std::lock_guard lock(fault_mu_);
  return faults_;
}

BackendStats FdsSim::stats() const {
  std::lock_guard lock(stats_mu_);
  BackendStats s = stats_;
  s.offered_tps = offered_rate(net::steady_ms());
  return s;
}

std::vector<std::uint64_t> FdsSim::received_digests() const {
  std::lock_guard lock(stats_mu_);
  return received_digests_;
}

std::vector<std::uint64_t> FdsSim::sent_digests() const {
  std::lock_guard lock(stats_mu_);
  return sent_digests_;
}

std::vector<std::pair<std::string, std::uint64_t>> FdsSim::verdict_counts() const {
  std::lock_guard lock(stats_mu_);
  return verdicts_;
}

std::string FdsSim::handle_control(std::string_view line) {
  std::istringstream in{std::string(line)};
  std::string cmd, arg, extra;
  in >> cmd >> arg >> extra;
  if (!extra.empty()) return "err too many arguments";
  if (cmd == "stop" && arg.empty()) {
    inject_fault(FaultKind::stop_processing);
  } else if (cmd == "resume" && arg.empty()) {
    inject_fault(FaultKind::resume);
  } else if (cmd == "cpu" && arg == "clear") {
    inject_fault(FaultKind::clear_cpu);
  } else if (cmd == "cpu" && !arg.empty() && iso8583::is_digits(arg) && arg.size() <= 3) {
    const int pct = std::stoi(arg);
    if (pct > 100) return "err cpu override must be in 0..100";
    inject_fault(FaultKind::cpu_override, pct);
  } else if (cmd == "stats" && arg.empty()) {
    return stats().to_line();
  } else {
    return "err unknown command";
  }
  return "ok";
}

}  // namespace isoha::fds
