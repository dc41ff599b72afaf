#pragma once

// Backend health: CPU + ISO echo samples, the pass/fail rule, the UP/DOWN
// debounce, and the plain-text body served on GET /health.

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>

#include "isoha/iso8583.hpp"
#include "isoha/net.hpp"

namespace isoha::health {

enum class EchoStatus { ok, timeout, refused, non_standard_reply };

struct EchoResult {
  EchoStatus status = EchoStatus::timeout;
  std::int64_t rtt_ms = 0;
  std::string reply;  // the 0810 payload when status is ok

  bool ok() const { return status == EchoStatus::ok; }
  static EchoResult success(std::int64_t rtt, std::string reply) {
    return {EchoStatus::ok, rtt, std::move(reply)};
  }
  static EchoResult failure(EchoStatus s) { return {s, 0, {}}; }
};

std::string to_string(EchoStatus status);

struct HealthSample {
  int cpu_pct = 0;
  EchoResult echo;
  std::int64_t taken_at_ms = 0;
};

struct HealthThresholds {
  int cpu_max_pct = 20;
  int echo_timeout_ms = 1000;
  int fall_count = 3;
  int rise_count = 5;
  int poll_interval_ms = 1000;

  void validate() const;
};

enum class FailReason { cpu_over, echo, unreachable, malformed };
std::string to_string(FailReason reason);

struct Evaluation {
  bool pass = true;
  std::optional<FailReason> reason;

  static Evaluation passed() { return {true, std::nullopt}; }
  static Evaluation failed(FailReason r) { return {false, r}; }
  friend bool operator==(const Evaluation&, const Evaluation&) = default;
};

// CPU at or over the threshold fails first, then a failed echo.
Evaluation evaluate_sample(const HealthSample& sample, const HealthThresholds& t);

enum class MemberState { up, down };
std::string to_string(MemberState state);

struct MemberHealth {
  MemberState state = MemberState::up;
  int consecutive_pass = 0;
  int consecutive_fail = 0;
  std::optional<HealthSample> last_sample;
  std::optional<FailReason> last_fail_reason;
};

struct StateUpdate {
  MemberHealth health;
  std::optional<MemberState> transition;  // set exactly when state flipped
};

StateUpdate update_member_state(MemberHealth m, const Evaluation& result, const HealthThresholds& t);

// ---------------------------------------------------------------------------
// Health body: "cpu=<int>\niso=<0810 payload | NONE>\n"

class HealthBodyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct HealthBody {
  int cpu_pct = 0;
  bool iso_present = false;
  std::string iso;
};

std::string render_health_body(const HealthSample& sample);
HealthBody parse_health_body(std::string_view text);

// ---------------------------------------------------------------------------
// CPU providers

class CpuProvider {
 public:
  virtual ~CpuProvider() = default;
  // nullopt on read failure.
  virtual std::optional<int> read() = 0;
};

// Host utilization from /proc/stat since the previous read.
class OsCpuProvider : public CpuProvider {
 public:
  explicit OsCpuProvider(std::string stat_path = "/proc/stat");
  std::optional<int> read() override;

 private:
  std::string path_;
  std::mutex mu_;
  std::uint64_t last_total_ = 0;
  std::uint64_t last_idle_ = 0;
};

class FunctionCpuProvider : public CpuProvider {
 public:
  explicit FunctionCpuProvider(std::function<std::optional<int>()> fn) : fn_(std::move(fn)) {}
  std::optional<int> read() override { return fn_(); }

 private:
  std::function<std::optional<int>()> fn_;
};

std::optional<int> sample_cpu(CpuProvider& provider);

// ---------------------------------------------------------------------------
// Echo probe

// Six-digit STAN source, wrapping from 999999 to 000001.
class StanSequence {
 public:
  explicit StanSequence(int start = 1) : next_(start) {}
  std::string next();

 private:
  std::atomic<int> next_;
};

// Sends a framed 0800 echo and waits for a STANDARD 0810 echoing field 11.
EchoResult echo_probe(const net::Endpoint& addr, const iso8583::FieldDictionary& dict,
                      int timeout_ms, std::string_view stan,
                      const framing::FramerConfig& framer = {});

// ---------------------------------------------------------------------------
// Agent (HTTP server) and monitor-side fetch

struct AgentConfig {
  net::Endpoint listen{"127.0.0.1", 0};
  net::Endpoint backend{"127.0.0.1", 0};  // local traffic port probed with echo
  int echo_timeout_ms = 1000;
  framing::FramerConfig framer;
  const iso8583::FieldDictionary* dict = &iso8583::FieldDictionary::default_dictionary();
};

// Serves GET /health. Each request takes a fresh sample (CPU read plus an
// echo probe against the backend); the latest sample is kept for readers.
// HA_HEALTH_PORT, when set, overrides the listen port.
class HealthAgent {
 public:
  HealthAgent(AgentConfig config, std::shared_ptr<CpuProvider> cpu);
  ~HealthAgent();
  HealthAgent(const HealthAgent&) = delete;
  HealthAgent& operator=(const HealthAgent&) = delete;

  void start();
  void stop();
  std::uint16_t port() const { return port_; }

  HealthSample take_sample();
  std::optional<HealthSample> last_sample() const;

 private:
  struct Impl;
  AgentConfig config_;
  std::shared_ptr<CpuProvider> cpu_;
  StanSequence stans_;
  std::unique_ptr<Impl> impl_;
  std::uint16_t port_ = 0;
  mutable std::mutex mu_;
  std::optional<HealthSample> last_;
};

struct FetchResult {
  std::optional<HealthBody> body;
  std::optional<FailReason> error;  // unreachable or malformed
};

FetchResult fetch_health(const net::Endpoint& addr, int timeout_ms);

}  // namespace isoha::health
