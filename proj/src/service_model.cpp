#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <queue>
#include <sstream>

#include "isoha/fds_sim.hpp"

namespace isoha::fds {

using iso8583::IsoMessage;
using iso8583::Mti;

void CpuModel::validate() const {
  if (table.empty()) throw ConfigError("cpu table must not be empty");
  for (std::size_t i = 1; i < table.size(); ++i) {
    if (!(table[i].first > table[i - 1].first)) throw ConfigError("cpu table tps must be strictly increasing");
  }
  for (const auto& [tps, pct] : table) {
    if (tps < 0 || pct < 0 || pct > 100) throw ConfigError("cpu table entry out of range");
  }
  if (base_pct < 0 || base_pct > 100) throw ConfigError("cpu base must be in 0..100");
}

std::vector<std::pair<double, int>> CpuModel::parse_table(std::string_view text) {
  std::vector<std::pair<double, int>> out;
  std::istringstream in{std::string(text)};
  std::string item;
  while (std::getline(in, item, ',')) {
    auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("cpu table entries are tps:pct, got '" + item + "'");
    try {
      out.emplace_back(std::stod(item.substr(0, colon)), std::stoi(item.substr(colon + 1)));
    } catch (const std::exception&) {
      throw ConfigError("bad cpu table entry '" + item + "'");
    }
  }
  return out;
}

int cpu_load(double offered_tps, const FaultState& faults, const CpuModel& model) {
  if (faults.cpu_override) return *faults.cpu_override;
  const auto& t = model.table;
  double v;
  if (offered_tps <= t.front().first) {
    v = t.front().second;
  } else if (offered_tps >= t.back().first) {
    v = t.back().second;
  } else {
    auto hi = std::upper_bound(t.begin(), t.end(), offered_tps,
                               [](double x, const std::pair<double, int>& p) { return x < p.first; });
    auto lo = std::prev(hi);
    const double frac = (offered_tps - lo->first) / (hi->first - lo->first);
    v = lo->second + frac * (hi->second - lo->second);
  }
  int top = 0;
  for (const auto& p : t) top = std::max(top, p.second);
  v = std::clamp(v, static_cast<double>(model.base_pct), static_cast<double>(std::max(top, model.base_pct)));
  return static_cast<int>(std::floor(v + 0.5));
}

std::optional<IsoMessage> handle_message(const IsoMessage& msg) {
  std::vector<int> echoed;
  if (msg.mti == Mti("0200")) {
    echoed = {3, 4, 7, 11, 41};
  } else if (msg.mti == Mti("0800")) {
    echoed = {11, 70};
  } else {
    return std::nullopt;
  }
  IsoMessage reply(iso8583::response_mti(msg.mti), {});
  for (int f : echoed) {
    if (const std::string* v = msg.field(f)) reply.fields.emplace(f, *v);
  }
  reply.fields[39] = "00";
  return reply;
}

// ---------------------------------------------------------------------------
// SimConfig

void SimConfig::validate() const {
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (!(service_time_ms > 0)) throw ConfigError("service_time_ms must be positive");
  if (queue_capacity < 0) throw ConfigError("queue_capacity must be >= 0");
  if (queue_timeout_ms < 1) throw ConfigError("queue_timeout_ms must be positive");
  if (warmup_ms < 0) throw ConfigError("warmup_ms must be >= 0");
  if (warmup_factor < 1.0) throw ConfigError("warmup_factor must be >= 1");
  if (cpu_tps_scale <= 0) throw ConfigError("cpu_tps_scale must be positive");
  cpu.validate();
  framer.validate();
}

SimConfig SimConfig::from_config(const KeyValueConfig& kv) {
  SimConfig c;
  c.id = kv.get_or("id", c.id);
  if (auto v = kv.get("listen")) c.listen = net::Endpoint::parse(*v);
  if (auto v = kv.get("health")) c.health = net::Endpoint::parse(*v);
  if (auto v = kv.get("control")) c.control = net::Endpoint::parse(*v);
  c.workers = kv.get_int("workers", c.workers);
  c.service_time_ms = kv.get_double("service_time_ms", c.service_time_ms);
  c.queue_capacity = kv.get_int("queue_capacity", c.queue_capacity);
  c.queue_timeout_ms = kv.get_int("queue_timeout_ms", c.queue_timeout_ms);
  c.warmup_ms = kv.get_int("warmup_ms", c.warmup_ms);
  c.warmup_factor = kv.get_double("warmup_factor", c.warmup_factor);
  c.jitter = kv.get_bool("jitter", c.jitter);
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<int>(c.seed)));
  c.cpu.base_pct = kv.get_int("cpu_base_pct", c.cpu.base_pct);
  if (auto v = kv.get("cpu_table")) c.cpu.table = CpuModel::parse_table(*v);
  c.cpu_tps_scale = kv.get_double("cpu_tps_scale", c.cpu_tps_scale);
  c.echo_timeout_ms = kv.get_int("echo_timeout_ms", c.echo_timeout_ms);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Service time and the discrete-event queue

ServiceTimeModel::ServiceTimeModel(const SimConfig& config)
    : base_ms_(config.service_time_ms),
      warmup_ms_(config.warmup_ms),
      warmup_factor_(config.warmup_factor),
      jitter_(config.jitter),
      rng_(config.seed) {}

double ServiceTimeModel::sample(double elapsed_ms) {
  double factor = 1.0;
  if (warmup_ms_ > 0 && elapsed_ms < warmup_ms_) {
    factor = warmup_factor_ - (warmup_factor_ - 1.0) * (elapsed_ms / warmup_ms_);
  }
  double t = base_ms_ * factor;
  if (jitter_) t *= exp_(rng_);
  return t;
}

std::vector<QueueResult> simulate_queue(const std::vector<double>& arrival_ms, const SimConfig& config) {
  ServiceTimeModel service(config);
  std::vector<QueueResult> out(arrival_ms.size());

  // Worker free times; FIFO start order equals arrival order.
  std::priority_queue<double, std::vector<double>, std::greater<>> free_at;
  for (int i = 0; i < config.workers; ++i) free_at.push(0.0);
  std::deque<std::size_t> waiting;

  auto start_ready = [&](double upto) {
    while (!waiting.empty() && free_at.top() <= upto) {
      const double worker_free = free_at.top();
      free_at.pop();
      const std::size_t idx = waiting.front();
      waiting.pop_front();
      const double start = std::max(worker_free, arrival_ms[idx]);
      if (start - arrival_ms[idx] > config.queue_timeout_ms) {
        out[idx].outcome = QueueOutcome::expired;
        free_at.push(start);
        continue;
      }
      const double done = start + service.sample(start);
      out[idx] = {QueueOutcome::answered, done};
      free_at.push(done);
    }
  };

  for (std::size_t i = 0; i < arrival_ms.size(); ++i) {
    const double t = arrival_ms[i];
    start_ready(t);
    waiting.push_back(i);
    start_ready(t);
    if (waiting.size() > static_cast<std::size_t>(config.queue_capacity)) {
      out[waiting.back()].outcome = QueueOutcome::rejected_full;
      waiting.pop_back();
    }
  }
  start_ready(std::numeric_limits<double>::infinity());
  return out;
}

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace isoha::fds
