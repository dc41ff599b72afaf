#pragma once

// Stress-test client: paced 0200 traffic over one or more sessions, with a
// per-sample outcome and an error-rate summary per (tps, interval) cell.

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "isoha/fds_sim.hpp"
#include "isoha/fixed.hpp"
#include "isoha/iso8583.hpp"
#include "isoha/net.hpp"

namespace isoha::loadgen {

class LoadgenError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LoadProfile {
  int tps = 10;
  int interval_s = 60;
  int timeout_ms = 1000;
  int connections = 1;
  std::uint64_t seed = 1;

  // samples = tps * interval_s
  std::uint64_t samples() const { return static_cast<std::uint64_t>(tps) * static_cast<std::uint64_t>(interval_s); }
  void validate() const;  // throws LoadgenError
};

struct StressReport {
  int tps = 0;
  int interval_s = 0;
  std::uint64_t samples = 0;
  std::uint64_t errors = 0;
  Fixed error_rate_pct;
  std::vector<int> cpu_series;
  int cpu_max_pct = 0;

  // Error breakdown; these sum to `errors`.
  std::uint64_t timeouts = 0;
  std::uint64_t connect_failures = 0;
  std::uint64_t nonstandard_replies = 0;
};

// 100*errors/samples, half up, 2 decimals. Throws LoadgenError on
// samples == 0 or errors > samples.
Fixed compute_error_rate(std::uint64_t samples, std::uint64_t errors);

// Deterministic 0200 requests; STAN is the 1-based sample index mod 999999.
class MessageGenerator {
 public:
  explicit MessageGenerator(std::uint64_t seed) : rng_(seed) {}
  iso8583::IsoMessage next();

 private:
  std::string digits(int n);
  std::mt19937_64 rng_;
  std::uint64_t index_ = 0;
};

// Real-wire run against a framed ISO endpoint. `health`, when set, is
// polled once per second for the CPU series. Throws LoadgenError when the
// target refuses the first connection.
StressReport run_profile(const LoadProfile& profile, const net::Endpoint& target,
                         const std::optional<net::Endpoint>& health, framing::FramerConfig framer = {});

// Deterministic harness: arrivals every 1000/tps ms through the simulator's
// queue model; a sample fails when rejected, shed, or answered later than
// timeout_ms. CPU is the model's reading for the offered rate.
StressReport simulate_profile(const LoadProfile& profile, const fds::SimConfig& sim);

using ProfileRunner = std::function<StressReport(const LoadProfile&)>;

// One report per (tps, interval); tps-major order. Throws on empty lists.
std::vector<StressReport> sweep_grid(const std::vector<int>& tps, const std::vector<int>& intervals_s,
                                     const LoadProfile& base, const ProfileRunner& run);

std::string csv_header();
std::string to_csv_row(const StressReport& r);
std::string to_csv(const std::vector<StressReport>& reports);

}  // namespace isoha::loadgen
