#pragma once

// Simulated fraud-detection backend: answers 0200/0800 traffic through a
// bounded FIFO queue served by a fixed worker pool, reports a CPU figure
// from a calibration table, and takes fault injections on a control port.

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "isoha/health.hpp"
#include "isoha/iso8583.hpp"
#include "isoha/kv_config.hpp"
#include "isoha/net.hpp"

namespace isoha::fds {

struct CpuModel {
  int base_pct = 5;
  // (offered_tps, cpu_pct), tps strictly increasing.
  std::vector<std::pair<double, int>> table{{0, 5}, {250, 5}, {500, 7}, {1000, 12}, {2000, 13}, {5000, 19}};

  void validate() const;
  static std::vector<std::pair<double, int>> parse_table(std::string_view text);  // "0:5,250:5,..."
};

struct FaultState {
  bool stop_processing = false;
  std::optional<int> cpu_override;
};

// Override when set, else linear interpolation over the table clamped to
// [base_pct, max table value], rounded half up.
int cpu_load(double offered_tps, const FaultState& faults, const CpuModel& model = {});

// 0200 -> 0210 echoing 3,4,7,11,41 plus 39="00"; 0800 -> 0810 echoing 11,70
// plus 39="00". Other MTIs get no reply.
std::optional<iso8583::IsoMessage> handle_message(const iso8583::IsoMessage& msg);

struct SimConfig {
  std::string id = "fds";
  net::Endpoint listen{"127.0.0.1", 0};
  net::Endpoint health{"127.0.0.1", 0};
  net::Endpoint control{"127.0.0.1", 0};

  int workers = 2;
  double service_time_ms = 40.0;
  int queue_capacity = 256;       // waiting slots beyond busy workers
  int queue_timeout_ms = 500;     // queued longer than this is shed unanswered
  int warmup_ms = 30000;          // service slows by warmup_factor at start, easing linearly to 1
  double warmup_factor = 1.5;
  bool jitter = false;            // exponential service times around the mean
  std::uint64_t seed = 1;

  CpuModel cpu;
  double cpu_tps_scale = 10.0;    // desk-rate -> calibration-table rate

  int echo_timeout_ms = 1000;     // agent's local echo probe
  framing::FramerConfig framer;
  bool record_digests = false;

  // Steady-state capacity in messages/second.
  double capacity_tps() const { return workers * 1000.0 / service_time_ms; }
  void validate() const;

  static SimConfig from_config(const KeyValueConfig& kv);
};

// Service time for a message starting `elapsed_ms` after serve start.
class ServiceTimeModel {
 public:
  explicit ServiceTimeModel(const SimConfig& config);
  double sample(double elapsed_ms);

 private:
  double base_ms_;
  int warmup_ms_;
  double warmup_factor_;
  bool jitter_;
  std::mt19937_64 rng_;
  std::exponential_distribution<double> exp_{1.0};
};

enum class QueueOutcome { answered, rejected_full, expired };

struct QueueResult {
  QueueOutcome outcome = QueueOutcome::answered;
  double done_ms = 0;  // completion time when answered
};

// Discrete-event run of the same queue discipline the live server uses:
// FIFO, `workers` servers, `queue_capacity` waiting slots, shedding of
// entries older than queue_timeout_ms. Arrivals must be nondecreasing.
std::vector<QueueResult> simulate_queue(const std::vector<double>& arrival_ms, const SimConfig& config);

struct BackendStats {
  std::uint64_t received = 0;
  std::uint64_t answered = 0;
  std::uint64_t rejected_queue_full = 0;
  std::uint64_t expired = 0;
  std::uint64_t nonstandard = 0;
  std::uint64_t dropped_stopped = 0;
  std::uint64_t unsupported = 0;
  double offered_tps = 0;

  std::string to_line() const;
};

enum class FaultKind { stop_processing, resume, cpu_override, clear_cpu };

class FdsSim {
 public:
  explicit FdsSim(SimConfig config);
  ~FdsSim();
  FdsSim(const FdsSim&) = delete;
  FdsSim& operator=(const FdsSim&) = delete;

  // Binds traffic, health and control ports. Throws net::NetError.
  void start();
  void stop();

  void inject_fault(FaultKind kind, int pct = 0);
  FaultState faults() const;
  BackendStats stats() const;
  int current_cpu() const;

  std::uint16_t traffic_port() const { return traffic_port_; }
  std::uint16_t health_port() const;
  std::uint16_t control_port() const;
  net::Endpoint traffic_endpoint() const { return {"127.0.0.1", traffic_port_}; }
  net::Endpoint health_endpoint() const { return {"127.0.0.1", health_port()}; }
  net::Endpoint control_endpoint() const { return {"127.0.0.1", control_port()}; }
  const SimConfig& config() const { return config_; }

  // Payload digests (fnv1a64) in arrival/emission order when record_digests.
  std::vector<std::uint64_t> received_digests() const;
  std::vector<std::uint64_t> sent_digests() const;
  // Verdict tally of every received payload.
  std::vector<std::pair<std::string, std::uint64_t>> verdict_counts() const;

  std::string handle_control(std::string_view line);

 private:
  struct Connection;
  struct Job {
    std::shared_ptr<Connection> conn;
    iso8583::IsoMessage message;
    std::int64_t arrived_ms = 0;
  };

  void accept_loop();
  void read_loop(std::shared_ptr<Connection> conn);
  void worker_loop();
  double offered_rate(std::int64_t now_ms) const;

  SimConfig config_;
  net::Socket listener_;
  std::uint16_t traffic_port_ = 0;
  std::int64_t started_ms_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread acceptor_;
  std::vector<std::thread> workers_;

  mutable std::mutex conn_mu_;
  std::vector<std::shared_ptr<Connection>> connections_;
  std::vector<std::thread> readers_;

  mutable std::mutex queue_mu_;
  std::condition_variable queue_cv_;
  std::deque<Job> queue_;
  int idle_workers_ = 0;
  ServiceTimeModel service_;

  mutable std::mutex stats_mu_;
  BackendStats stats_;
  mutable std::deque<std::int64_t> recent_arrivals_;
  std::vector<std::uint64_t> received_digests_;
  std::vector<std::uint64_t> sent_digests_;
  std::vector<std::pair<std::string, std::uint64_t>> verdicts_;

  mutable std::mutex fault_mu_;
  FaultState faults_;

  std::unique_ptr<health::HealthAgent> agent_;
  std::unique_ptr<net::LineServer> control_;
};

std::uint64_t fnv1a64(std::string_view data);

}  // namespace isoha::fds
