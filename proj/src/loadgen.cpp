#include "isoha/loadgen.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <mutex>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "isoha/health.hpp"
#include "isoha/log.hpp"

namespace isoha::loadgen {

namespace {

enum Outcome : std::uint8_t { kPending = 0, kOk = 1, kUnsent = 2 };

std::string stan_for(std::uint64_t index) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "%06llu", static_cast<unsigned long long>(index % 999999 + 1));
  return buf;
}

struct Lane {
  net::Socket sock;
  std::mutex mu;
  std::unordered_map<std::string, std::pair<std::size_t, std::int64_t>> inflight;
  std::atomic<bool> sending_done{false};
  std::atomic<std::int64_t> last_send_ms{0};
  std::uint64_t nonstandard = 0;
};

void fill_errors(StressReport& r, std::uint64_t ok, std::uint64_t unsent, std::uint64_t nonstandard_seen) {
  r.errors = r.samples - ok;
  r.connect_failures = unsent;
  r.nonstandard_replies = std::min(nonstandard_seen, r.errors - unsent);
  r.timeouts = r.errors - unsent - r.nonstandard_replies;
  r.error_rate_pct = compute_error_rate(r.samples, r.errors);
}

}  // namespace

void LoadProfile::validate() const {
  if (tps < 1) throw LoadgenError("tps must be >= 1");
  if (interval_s < 1) throw LoadgenError("interval must be >= 1 s");
  if (timeout_ms < 1) throw LoadgenError("timeout must be >= 1 ms");
  if (connections < 1) throw LoadgenError("connections must be >= 1");
}

Fixed compute_error_rate(std::uint64_t samples, std::uint64_t errors) {
  if (samples == 0) throw LoadgenError("error rate needs at least one sample");
  if (errors > samples) throw LoadgenError("errors exceed samples");
  return round_ratio(static_cast<__int128>(errors) * 100, samples, 2);
}

std::string MessageGenerator::digits(int n) {
  std::uniform_int_distribution<int> d(0, 9);
  std::string s;
  for (int i = 0; i < n; ++i) s.push_back(static_cast<char>('0' + d(rng_)));
  return s;
}

iso8583::IsoMessage MessageGenerator::next() {
  std::uniform_int_distribution<int> pan_len(13, 19);
  std::uniform_int_distribution<int> month(1, 12), day(1, 28), hour(0, 23), minute(0, 59);
  char ts[16];
  std::snprintf(ts, sizeof ts, "%02d%02d%02d%02d%02d", month(rng_), day(rng_), hour(rng_), minute(rng_), minute(rng_));
  iso8583::IsoMessage m(iso8583::Mti("0200"), {});
  m.fields[2] = "4" + digits(pan_len(rng_) - 1);
  m.fields[3] = "000000";
  m.fields[4] = "0000" + digits(8);
  m.fields[7] = ts;
  m.fields[11] = stan_for(index_++);
  m.fields[41] = "TERM" + digits(4);
  return m;
}

StressReport run_profile(const LoadProfile& profile, const net::Endpoint& target,
                         const std::optional<net::Endpoint>& health, framing::FramerConfig framer) {
  profile.validate();
  const auto& dict = iso8583::FieldDictionary::default_dictionary();
  const std::uint64_t samples = profile.samples();
  const int lanes_n = profile.connections;

  std::vector<std::unique_ptr<Lane>> lanes;
  for (int i = 0; i < lanes_n; ++i) {
    auto lane = std::make_unique<Lane>();
    try {
      lane->sock = net::Socket::connect(target, net::Millis(2000));
    } catch (const net::NetError& e) {
      if (i == 0) throw LoadgenError("target " + target.str() + " unreachable: " + e.what());
      log::get()->warn("connection {} to {} failed: {}", i, target.str(), e.what());
    }
    lanes.push_back(std::move(lane));
  }

  std::vector<std::string> frames;
  frames.reserve(samples);
  MessageGenerator gen(profile.seed);
  for (std::uint64_t k = 0; k < samples; ++k) frames.push_back(framing::encode_frame(iso8583::encode_message(gen.next(), dict), framer));

  std::vector<std::uint8_t> outcome(samples, kPending);
  std::atomic<bool> stop_health{false};
  std::mutex health_mu;
  std::condition_variable health_cv;
  std::vector<int> cpu_series;
  std::thread health_thread;
  if (health) {
    health_thread = std::thread([&] {
      std::unique_lock lock(health_mu);
      while (!stop_health) {
        lock.unlock();
        auto fetched = health::fetch_health(*health, 1500);
        lock.lock();
        if (fetched.body) cpu_series.push_back(fetched.body->cpu_pct);
        health_cv.wait_for(lock, std::chrono::seconds(1), [&] { return stop_health.load(); });
      }
    });
  }

  const auto start = std::chrono::steady_clock::now() + std::chrono::milliseconds(50);
  const double period_ns = 1e9 / profile.tps;
  std::vector<std::thread> threads;
  for (int li = 0; li < lanes_n; ++li) {
    Lane& lane = *lanes[li];
    if (!lane.sock.valid()) {
      for (std::uint64_t k = li; k < samples; k += lanes_n) outcome[k] = kUnsent;
      lane.sending_done = true;
      continue;
    }
    threads.emplace_back([&, li] {
      for (std::uint64_t k = li; k < samples; k += lanes_n) {
        std::this_thread::sleep_until(start + std::chrono::nanoseconds(static_cast<std::int64_t>(k * period_ns)));
        const std::int64_t now = net::steady_ms();
        {
          std::lock_guard lock(lane.mu);
          lane.inflight[stan_for(k)] = {k, now};
        }
        try {
          lane.sock.send_all(frames[k]);
          lane.last_send_ms = now;
        } catch (const net::NetError&) {
          std::lock_guard lock(lane.mu);
          lane.inflight.erase(stan_for(k));
          for (std::uint64_t j = k; j < samples; j += lanes_n) outcome[j] = kUnsent;
          break;
        }
      }
      lane.sending_done = true;
    });
    threads.emplace_back([&] {
      framing::FrameBuffer buffer(framer);
      char buf[16384];
      for (;;) {
        if (lane.sending_done) {
          std::lock_guard lock(lane.mu);
          if (lane.inflight.empty() || net::steady_ms() > lane.last_send_ms + profile.timeout_ms) break;
        }
        std::optional<std::size_t> n;
        try {
          n = lane.sock.recv_some(buf, sizeof buf, net::Millis(50));
        } catch (const net::NetError&) {
          break;
        }
        if (!n) continue;
        if (*n == 0) break;
        std::vector<std::string> replies;
        try {
          replies = buffer.push({buf, *n});
        } catch (const framing::FramingError&) {
          break;
        }
        const std::int64_t now = net::steady_ms();
        for (const auto& payload : replies) {
          iso8583::Decoded d = iso8583::decode_message(payload, dict);
          const std::string* stan = d.message.field(11);
          std::lock_guard lock(lane.mu);
          if (!d.verdict.is_standard() || !stan) {
            ++lane.nonstandard;
            continue;
          }
          auto it = lane.inflight.find(*stan);
          if (it == lane.inflight.end()) continue;
          if (now - it->second.second <= profile.timeout_ms) outcome[it->second.first] = kOk;
          lane.inflight.erase(it);
        }
      }
      // Wakes the sender if it is still blocked on a dead peer.
      lane.sock.shutdown();
    });
  }
  for (auto& t : threads) t.join();
  if (health) {
    {
      std::lock_guard lock(health_mu);
      stop_health = true;
    }
    health_cv.notify_all();
    health_thread.join();
  }

  StressReport r;
  r.tps = profile.tps;
  r.interval_s = profile.interval_s;
  r.samples = samples;
  r.cpu_series = std::move(cpu_series);
  r.cpu_max_pct = r.cpu_series.empty() ? 0 : *std::max_element(r.cpu_series.begin(), r.cpu_series.end());
  std::uint64_t ok = std::count(outcome.begin(), outcome.end(), kOk);
  std::uint64_t unsent = std::count(outcome.begin(), outcome.end(), kUnsent);
  std::uint64_t nonstd = 0;
  for (auto& lane : lanes) nonstd += lane->nonstandard;
  fill_errors(r, ok, unsent, nonstd);
  return r;
}

StressReport simulate_profile(const LoadProfile& profile, const fds::SimConfig& sim) {
  profile.validate();
  sim.validate();
  const std::uint64_t samples = profile.samples();
  std::vector<double> arrivals(samples);
  for (std::uint64_t k = 0; k < samples; ++k) arrivals[k] = static_cast<double>(k) * 1000.0 / profile.tps;
  auto results = fds::simulate_queue(arrivals, sim);

  std::uint64_t ok = 0;
  for (std::uint64_t k = 0; k < samples; ++k) {
    const auto& q = results[k];
    if (q.outcome == fds::QueueOutcome::answered && q.done_ms - arrivals[k] <= profile.timeout_ms) ++ok;
  }
  StressReport r;
  r.tps = profile.tps;
  r.interval_s = profile.interval_s;
  r.samples = samples;
  const int cpu = fds::cpu_load(profile.tps * sim.cpu_tps_scale, {}, sim.cpu);
  r.cpu_series.assign(profile.interval_s, cpu);
  r.cpu_max_pct = cpu;
  fill_errors(r, ok, 0, 0);
  return r;
}

std::vector<StressReport> sweep_grid(const std::vector<int>& tps, const std::vector<int>& intervals_s,
                                     const LoadProfile& base, const ProfileRunner& run) {
  if (tps.empty()) throw LoadgenError("grid needs at least one tps value");
  if (intervals_s.empty()) throw LoadgenError("grid needs at least one interval");
  std::vector<StressReport> out;
  for (int t : tps) {
    for (int i : intervals_s) {
      LoadProfile p = base;
      p.tps = t;
      p.interval_s = i;
      out.push_back(run(p));
    }
  }
  return out;
}

std::string csv_header() { return "tps,interval_s,samples,errors,error_rate_pct,cpu_max_pct"; }

std::string to_csv_row(const StressReport& r) {
  std::ostringstream s;
  s << r.tps << ',' << r.interval_s << ',' << r.samples << ',' << r.errors << ',' << r.error_rate_pct.str() << ','
    << r.cpu_max_pct;
  return s.str();
}

std::string to_csv(const std::vector<StressReport>& reports) {
  std::string out = csv_header() + "\n";
  for (const auto& r : reports) out += to_csv_row(r) + "\n";
  return out;
}

}  // namespace isoha::loadgen
