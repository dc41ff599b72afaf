#include "isoha/monitor.hpp"

#include <future>

#include "isoha/log.hpp"

namespace isoha::monitor {

using health::Evaluation;
using health::FailReason;

HttpHealthSource::HttpHealthSource(health::HealthThresholds thresholds, bool direct_echo,
                                   framing::FramerConfig framer)
    : thresholds_(thresholds), direct_echo_(direct_echo), framer_(framer) {}

PollOutcome HttpHealthSource::poll(const pool::PoolMember& member) {
  // The agent runs its echo probe inside the request, so allow for it.
  const int http_timeout = thresholds_.echo_timeout_ms + 500;
  health::FetchResult fetched = health::fetch_health(member.health_addr, http_timeout);
  if (!fetched.body) return {Evaluation::failed(*fetched.error), std::nullopt};

  health::HealthSample sample;
  sample.taken_at_ms = net::steady_ms();
  sample.cpu_pct = fetched.body->cpu_pct;
  if (direct_echo_) {
    sample.echo = health::echo_probe(member.traffic, iso8583::FieldDictionary::default_dictionary(),
                                     thresholds_.echo_timeout_ms, stans_.next(), framer_);
  } else if (fetched.body->iso_present) {
    sample.echo = health::EchoResult::success(0, fetched.body->iso);
  } else {
    sample.echo = health::EchoResult::failure(health::EchoStatus::timeout);
  }
  return {health::evaluate_sample(sample, thresholds_), sample};
}

Monitor::Monitor(pool::Pool pool, health::HealthThresholds thresholds, std::shared_ptr<HealthSource> source,
                 std::shared_ptr<Clock> clock)
    : thresholds_(thresholds), source_(std::move(source)), clock_(std::move(clock)), pool_(std::move(pool)) {
  thresholds_.validate();
}

Monitor::~Monitor() { stop(); }

void Monitor::add_event_sink(EventSink sink) {
  std::lock_guard lock(mu_);
  sinks_.push_back(std::move(sink));
}

void Monitor::report_connect_failure(const std::string& member_id) {
  std::lock_guard lock(mu_);
  pending_failures_.push_back(member_id);
}

void Monitor::publish(const pool::SwitchEvent& ev) {
  // Caller holds mu_.
  events_.push_back(ev);
  log::get()->info("switch {}", ev.to_log_line());
  for (auto& sink : sinks_) sink(ev);
}

void Monitor::apply(const std::string& id, const Evaluation& eval,
                    const std::optional<health::HealthSample>& sample) {
  // Caller holds mu_.
  health::MemberHealth h = pool_.member(id).health_state;
  if (sample) h.last_sample = sample;
  health::StateUpdate update = health::update_member_state(std::move(h), eval, thresholds_);
  if (update.transition) {
    log::get()->info("member {} -> {} ({})", id, health::to_string(*update.transition),
                     eval.reason ? health::to_string(*eval.reason) : "pass");
  }
  if (auto ev = pool_.apply_health_update(id, std::move(update.health), clock_->now_ms())) publish(*ev);
}

void Monitor::tick() {
  std::vector<pool::PoolMember> members;
  {
    std::lock_guard lock(mu_);
    for (const std::string& id : pending_failures_) apply(id, Evaluation::failed(FailReason::unreachable), std::nullopt);
    pending_failures_.clear();
    members.assign(pool_.members().begin(), pool_.members().end());
  }

  // Poll both members concurrently so one slow member does not delay the other.
  auto second = std::async(std::launch::async, [&] { return source_->poll(members[1]); });
  PollOutcome first = source_->poll(members[0]);
  PollOutcome other = second.get();

  std::lock_guard lock(mu_);
  apply(members[0].id, first.evaluation, first.sample);
  apply(members[1].id, other.evaluation, other.sample);
  ++ticks_;
}

void Monitor::start() {
  std::lock_guard lock(run_mu_);
  if (running_) return;
  running_ = true;
  thread_ = std::thread([this] {
    auto next = std::chrono::steady_clock::now();
    const auto interval = std::chrono::milliseconds(thresholds_.poll_interval_ms);
    std::unique_lock lock(run_mu_);
    while (running_) {
      lock.unlock();
      try {
        tick();
      } catch (const std::exception& e) {
        log::get()->error("monitor tick failed: {}", e.what());
      }
      lock.lock();
      next += interval;
      const auto now = std::chrono::steady_clock::now();
      if (next < now) next = now;
      run_cv_.wait_until(lock, next, [this] { return !running_; });
    }
  });
}

void Monitor::stop() {
  {
    std::lock_guard lock(run_mu_);
    if (!running_) return;
    running_ = false;
  }
  run_cv_.notify_all();
  if (thread_.joinable()) thread_.join();
}

pool::Pool Monitor::snapshot() const {
  std::lock_guard lock(mu_);
  return pool_;
}

std::vector<pool::SwitchEvent> Monitor::events() const {
  std::lock_guard lock(mu_);
  return events_;
}

std::optional<pool::SwitchEvent> Monitor::force_active(const std::string& id) {
  std::lock_guard lock(mu_);
  auto ev = pool_.force_active(id, clock_->now_ms());
  if (ev) publish(*ev);
  return ev;
}

}  // namespace isoha::monitor
