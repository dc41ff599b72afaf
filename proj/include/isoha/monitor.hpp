#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "isoha/health.hpp"
#include "isoha/pool.hpp"

namespace isoha::monitor {

class Clock {
 public:
  virtual ~Clock() = default;
  virtual std::int64_t now_ms() const = 0;
};

class SteadyClock : public Clock {
 public:
  std::int64_t now_ms() const override { return net::steady_ms(); }
};

class ManualClock : public Clock {
 public:
  explicit ManualClock(std::int64_t start = 0) : now_(start) {}
  std::int64_t now_ms() const override { return now_.load(); }
  void set(std::int64_t t) { now_ = t; }
  void advance(std::int64_t dt) { now_ += dt; }

 private:
  std::atomic<std::int64_t> now_;
};

struct PollOutcome {
  health::Evaluation evaluation;
  std::optional<health::HealthSample> sample;
};

class HealthSource {
 public:
  virtual ~HealthSource() = default;
  virtual PollOutcome poll(const pool::PoolMember& member) = 0;
};

// GET /health on the member's agent. With `direct_echo`, the monitor also
// sends its own echo probe to the member's traffic port and ignores the
// agent's iso line.
class HttpHealthSource : public HealthSource {
 public:
  HttpHealthSource(health::HealthThresholds thresholds, bool direct_echo = false,
                   framing::FramerConfig framer = {});
  PollOutcome poll(const pool::PoolMember& member) override;

 private:
  health::HealthThresholds thresholds_;
  bool direct_echo_;
  framing::FramerConfig framer_;
  health::StanSequence stans_{500000};
};

// Owns the pool. One tick polls every member, folds the results through
// the debounce, and applies the pool update; every change of active member
// is appended to the event log.
class Monitor {
 public:
  using EventSink = std::function<void(const pool::SwitchEvent&)>;

  Monitor(pool::Pool pool, health::HealthThresholds thresholds, std::shared_ptr<HealthSource> source,
          std::shared_ptr<Clock> clock);
  ~Monitor();
  Monitor(const Monitor&) = delete;
  Monitor& operator=(const Monitor&) = delete;

  void add_event_sink(EventSink sink);

  // Session-side connect failures; folded in as FAIL at the next tick.
  void report_connect_failure(const std::string& member_id);

  void tick();

  // Runs tick() every poll_interval_ms until stop().
  void start();
  void stop();

  pool::Pool snapshot() const;
  std::vector<pool::SwitchEvent> events() const;
  std::uint64_t ticks() const { return ticks_; }
  std::optional<pool::SwitchEvent> force_active(const std::string& id);
  const health::HealthThresholds& thresholds() const { return thresholds_; }
  std::int64_t now_ms() const { return clock_->now_ms(); }

 private:
  void apply(const std::string& id, const health::Evaluation& eval,
             const std::optional<health::HealthSample>& sample);
  void publish(const pool::SwitchEvent& ev);

  health::HealthThresholds thresholds_;
  std::shared_ptr<HealthSource> source_;
  std::shared_ptr<Clock> clock_;

  mutable std::mutex mu_;
  pool::Pool pool_;
  std::vector<pool::SwitchEvent> events_;
  std::vector<std::string> pending_failures_;
  std::vector<EventSink> sinks_;

  std::atomic<std::uint64_t> ticks_{0};
  std::mutex run_mu_;
  std::condition_variable run_cv_;
  bool running_ = false;
  std::thread thread_;
};

}  // namespace isoha::monitor
