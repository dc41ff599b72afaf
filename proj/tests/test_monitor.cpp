#include <gtest/gtest.h>

#include <random>

#include "isoha/fds_sim.hpp"
#include "isoha/monitor.hpp"
#include "support.hpp"

using namespace isoha;
using namespace isoha::monitor;
using testsupport::ScriptedSource;

namespace {

pool::PoolMember member(const std::string& id) {
  pool::PoolMember m;
  m.id = id;
  return m;
}

struct Rig {
  explicit Rig(health::HealthThresholds t = {}, pool::Failback fb = pool::Failback::manual)
      : source(std::make_shared<ScriptedSource>(testsupport::all_pass())),
        clock(std::make_shared<ManualClock>(0)),
        mon(pool::Pool(member("primary"), member("standby"), pool::Mode::active_passive, fb), t, source, clock) {}

  // Advances the clock one poll interval at a time up to `until_ms`.
  void run_until(std::int64_t until_ms) {
    while (clock->now_ms() + mon.thresholds().poll_interval_ms <= until_ms) {
      clock->advance(mon.thresholds().poll_interval_ms);
      mon.tick();
    }
  }

  std::shared_ptr<ScriptedSource> source;
  std::shared_ptr<ManualClock> clock;
  Monitor mon;
};

}  // namespace

TEST(Monitor, QuiescentWhileHealthy) {
  Rig r;
  r.run_until(1000000);
  EXPECT_TRUE(r.mon.events().empty());
  EXPECT_EQ(r.mon.ticks(), 1000u);
  EXPECT_EQ(r.mon.snapshot().active_id(), "primary");
}

TEST(Monitor, DetectionWithinFourSecondsForAnyInjectionPhase) {
  for (int offset = 0; offset < 1000; offset += 37) {
    for (auto why : {health::FailReason::cpu_over, health::FailReason::echo}) {
      Rig r;
      r.run_until(5000);
      const std::int64_t injected = 5000 + offset;
      r.clock->set(injected);
      r.source->set(testsupport::fail_member("primary", why));
      r.run_until(injected + 10000);
      auto evs = r.mon.events();
      ASSERT_EQ(evs.size(), 1u);
      EXPECT_LE(evs[0].at_ms - injected, 4000);
      EXPECT_GE(evs[0].at_ms - injected, 2000);
      EXPECT_EQ(evs[0].from, "primary");
      EXPECT_EQ(evs[0].to, "standby");
      EXPECT_EQ(evs[0].reason, why == health::FailReason::cpu_over ? pool::SwitchReason::cpu_over
                                                                   : pool::SwitchReason::echo);
    }
  }
}

TEST(Monitor, ShortBlipDoesNotSwitch) {
  Rig r;
  r.run_until(3000);
  r.source->set(testsupport::fail_member("primary", health::FailReason::echo));
  r.run_until(5000);
  r.source->set(testsupport::all_pass());
  r.run_until(20000);
  EXPECT_TRUE(r.mon.events().empty());
}

TEST(Monitor, MalformedBodyIsConnFail) {
  Rig r;
  r.source->set(testsupport::fail_member("primary", health::FailReason::malformed));
  r.run_until(3000);
  ASSERT_EQ(r.mon.events().size(), 1u);
  EXPECT_EQ(r.mon.events()[0].reason, pool::SwitchReason::conn_fail);
}

TEST(Monitor, ManualFailbackKeepsStandbyAfterRecovery) {
  Rig r;
  r.source->set(testsupport::fail_member("primary", health::FailReason::cpu_over));
  r.run_until(5000);
  r.source->set(testsupport::all_pass());
  r.run_until(30000);
  EXPECT_EQ(r.mon.events().size(), 1u);
  EXPECT_EQ(r.mon.snapshot().active_id(), "standby");
  EXPECT_EQ(r.mon.snapshot().primary().health_state.state, health::MemberState::up);
}

TEST(Monitor, AutoFailbackAfterRiseCount) {
  Rig r({}, pool::Failback::automatic);
  r.source->set(testsupport::fail_member("primary", health::FailReason::cpu_over));
  r.run_until(3000);
  r.source->set(testsupport::all_pass());
  r.run_until(7000);
  EXPECT_EQ(r.mon.events().size(), 1u);
  r.run_until(8000);
  auto evs = r.mon.events();
  ASSERT_EQ(evs.size(), 2u);
  EXPECT_EQ(evs[1].to, "primary");
  EXPECT_EQ(evs[1].reason, pool::SwitchReason::recovery);
  EXPECT_EQ(evs[1].at_ms, 8000);
}

TEST(Monitor, ConnectFailuresFoldIntoNextTick) {
  health::HealthThresholds t;
  t.fall_count = 1;
  Rig r(t);
  r.mon.report_connect_failure("primary");
  EXPECT_TRUE(r.mon.events().empty());
  r.run_until(1000);
  ASSERT_EQ(r.mon.events().size(), 1u);
  EXPECT_EQ(r.mon.events()[0].reason, pool::SwitchReason::conn_fail);
}

TEST(Monitor, ForceActiveAndSinks) {
  Rig r;
  std::vector<std::string> seen;
  r.mon.add_event_sink([&](const pool::SwitchEvent& ev) { seen.push_back(ev.to_log_line()); });
  r.clock->set(777);
  auto ev = r.mon.force_active("standby");
  ASSERT_TRUE(ev);
  EXPECT_EQ(ev->reason, pool::SwitchReason::operator_request);
  ASSERT_EQ(seen.size(), 1u);
  EXPECT_EQ(seen[0], "ts=777 from=primary to=standby reason=OPERATOR");
  EXPECT_FALSE(r.mon.force_active("standby"));
}

TEST(Monitor, BackgroundLoopTicks) {
  health::HealthThresholds t;
  t.poll_interval_ms = 20;
  auto source = std::make_shared<ScriptedSource>(testsupport::all_pass());
  Monitor mon(pool::Pool(member("a"), member("b")), t, source, std::make_shared<SteadyClock>());
  mon.start();
  EXPECT_TRUE(testsupport::wait_for([&] { return mon.ticks() >= 5; }, 3000));
  mon.stop();
  const auto n = mon.ticks();
  std::this_thread::sleep_for(std::chrono::milliseconds(60));
  EXPECT_EQ(mon.ticks(), n);
}

TEST(HttpSource, LiveSimulatorPassesThenFailsOnCpu) {
  fds::FdsSim sim(testsupport::fast_sim("live", false));
  sim.start();
  pool::PoolMember m = member("live");
  m.traffic = sim.traffic_endpoint();
  m.health_addr = sim.health_endpoint();
  health::HealthThresholds t;
  t.echo_timeout_ms = 500;
  for (bool direct : {false, true}) {
    HttpHealthSource src(t, direct);
    sim.inject_fault(fds::FaultKind::clear_cpu);
    auto out = src.poll(m);
    EXPECT_TRUE(out.evaluation.pass);
    ASSERT_TRUE(out.sample);
    EXPECT_TRUE(out.sample->echo.ok());
    sim.inject_fault(fds::FaultKind::cpu_override, 25);
    out = src.poll(m);
    EXPECT_EQ(out.evaluation, health::Evaluation::failed(health::FailReason::cpu_over));
  }
  sim.inject_fault(fds::FaultKind::clear_cpu);
  sim.inject_fault(fds::FaultKind::stop_processing);
  HttpHealthSource src(t);
  EXPECT_EQ(src.poll(m).evaluation, health::Evaluation::failed(health::FailReason::echo));
  sim.stop();
  EXPECT_EQ(src.poll(m).evaluation, health::Evaluation::failed(health::FailReason::unreachable));
}
