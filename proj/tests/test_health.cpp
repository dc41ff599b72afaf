#include <gtest/gtest.h>

#include <cstdio>
#include <deque>
#include <fstream>
#include <random>

#include <httplib.h>

#include "isoha/fds_sim.hpp"
#include "isoha/health.hpp"
#include "support.hpp"

using namespace isoha;
using namespace isoha::health;

namespace {

HealthSample sample(int cpu, EchoResult echo) { return {cpu, std::move(echo), 0}; }
EchoResult ok_echo() { return EchoResult::success(3, "0810..."); }

}  // namespace

TEST(Evaluate, Examples) {
  HealthThresholds t;
  EXPECT_EQ(evaluate_sample(sample(19, ok_echo()), t), Evaluation::passed());
  EXPECT_EQ(evaluate_sample(sample(25, ok_echo()), t), Evaluation::failed(FailReason::cpu_over));
  EXPECT_EQ(evaluate_sample(sample(5, EchoResult::failure(EchoStatus::timeout)), t),
            Evaluation::failed(FailReason::echo));
  EXPECT_EQ(evaluate_sample(sample(20, ok_echo()), t), Evaluation::failed(FailReason::cpu_over));
  EXPECT_EQ(evaluate_sample(sample(30, EchoResult::failure(EchoStatus::refused)), t),
            Evaluation::failed(FailReason::cpu_over));
}

TEST(Evaluate, BoundaryAcrossThresholds) {
  for (int max = 1; max <= 100; ++max) {
    HealthThresholds t;
    t.cpu_max_pct = max;
    EXPECT_FALSE(evaluate_sample(sample(max, ok_echo()), t).pass);
    EXPECT_TRUE(evaluate_sample(sample(max - 1, ok_echo()), t).pass);
  }
}

TEST(Thresholds, Validate) {
  HealthThresholds t;
  EXPECT_NO_THROW(t.validate());
  t.cpu_max_pct = 101;
  EXPECT_THROW(t.validate(), std::invalid_argument);
  t = {};
  t.fall_count = 0;
  EXPECT_THROW(t.validate(), std::invalid_argument);
  t = {};
  t.poll_interval_ms = -1;
  EXPECT_THROW(t.validate(), std::invalid_argument);
}

TEST(Debounce, Examples) {
  HealthThresholds t;
  MemberHealth m;
  auto fail = Evaluation::failed(FailReason::echo);
  auto r = update_member_state(m, fail, t);
  r = update_member_state(r.health, fail, t);
  EXPECT_EQ(r.health.state, MemberState::up);
  EXPECT_EQ(r.health.consecutive_fail, 2);
  EXPECT_FALSE(r.transition);
  r = update_member_state(r.health, fail, t);
  EXPECT_EQ(r.health.state, MemberState::down);
  EXPECT_EQ(r.transition, MemberState::down);
  EXPECT_EQ(r.health.last_fail_reason, FailReason::echo);
  for (int i = 0; i < 4; ++i) {
    r = update_member_state(r.health, Evaluation::passed(), t);
    EXPECT_FALSE(r.transition);
  }
  r = update_member_state(r.health, Evaluation::passed(), t);
  EXPECT_EQ(r.transition, MemberState::up);
  EXPECT_EQ(r.health.state, MemberState::up);
}

TEST(Debounce, OppositeResultResetsCounter) {
  HealthThresholds t;
  MemberHealth m;
  auto fail = Evaluation::failed(FailReason::cpu_over);
  m = update_member_state(m, fail, t).health;
  m = update_member_state(m, fail, t).health;
  m = update_member_state(m, Evaluation::passed(), t).health;
  EXPECT_EQ(m.consecutive_fail, 0);
  EXPECT_EQ(m.consecutive_pass, 1);
  m = update_member_state(m, fail, t).health;
  m = update_member_state(m, fail, t).health;
  EXPECT_EQ(m.state, MemberState::up);
}

TEST(Property, DebounceMatchesReferenceFold) {
  std::mt19937_64 rng(5);
  for (auto [fall, rise] : {std::pair{3, 5}, std::pair{1, 1}, std::pair{2, 7}}) {
    HealthThresholds t;
    t.fall_count = fall;
    t.rise_count = rise;
    std::vector<bool> results;
    // Long runs are needed to reach the thresholds, so bias toward repeats.
    bool last = true;
    for (int i = 0; i < 20000; ++i) {
      if (rng() % 4 == 0) last = !last;
      results.push_back(last);
    }
    auto expect = testsupport::reference_fold(results, fall, rise);
    MemberHealth m;
    int flips = 0;
    for (std::size_t i = 0; i < results.size(); ++i) {
      auto r = update_member_state(m, results[i] ? Evaluation::passed() : Evaluation::failed(FailReason::echo), t);
      ASSERT_EQ(r.health.state, expect[i]) << "step " << i;
      ASSERT_EQ(r.transition.has_value(), r.health.state != m.state);
      ASSERT_TRUE(r.health.consecutive_fail == 0 || r.health.consecutive_pass == 0);
      flips += r.transition ? 1 : 0;
      m = r.health;
    }
    EXPECT_GT(flips, 10);
  }
}

TEST(Body, RenderExamples) {
  EXPECT_EQ(render_health_body(sample(5, EchoResult::success(2, "0810XYZ"))), "cpu=5\niso=0810XYZ\n");
  EXPECT_EQ(render_health_body(sample(12, EchoResult::failure(EchoStatus::timeout))), "cpu=12\niso=NONE\n");
}

TEST(Body, ParseInverts) {
  auto b = parse_health_body("cpu=5\niso=0810XYZ\n");
  EXPECT_EQ(b.cpu_pct, 5);
  EXPECT_TRUE(b.iso_present);
  EXPECT_EQ(b.iso, "0810XYZ");
  b = parse_health_body("cpu=12\niso=NONE\n");
  EXPECT_EQ(b.cpu_pct, 12);
  EXPECT_FALSE(b.iso_present);
}

TEST(Body, MalformedBodies) {
  for (const char* bad : {"", "cpu=5\n", "cpu=x\niso=NONE\n", "cpu=\niso=NONE\n", "cpu=101\niso=NONE\n",
                          "cpu=-1\niso=NONE\n", "iso=NONE\ncpu=5\n", "cpu=5\niso=\n", "cpu=5\niso=NONE",
                          "cpu=5\niso=NONE\nextra\n", "garbage"}) {
    EXPECT_THROW(parse_health_body(bad), HealthBodyError) << bad;
  }
}

TEST(Property, RenderParseInverse) {
  std::mt19937_64 rng(8);
  const auto& dict = iso8583::FieldDictionary::default_dictionary();
  for (int i = 0; i < 2000; ++i) {
    const int cpu = static_cast<int>(rng() % 101);
    const bool ok = rng() % 2;
    std::string reply = iso8583::encode_message(
        iso8583::IsoMessage(iso8583::Mti("0810"), {{11, testsupport::stan_of(i)}, {39, "00"}, {70, "301"}}), dict);
    HealthSample s = sample(cpu, ok ? EchoResult::success(1, reply) : EchoResult::failure(EchoStatus::timeout));
    auto b = parse_health_body(render_health_body(s));
    ASSERT_EQ(b.cpu_pct, cpu);
    ASSERT_EQ(b.iso_present, ok);
    if (ok) {
      ASSERT_EQ(b.iso, reply);
    }
  }
}

TEST(Cpu, OsProviderReadsDeltas) {
  const std::string path = ::testing::TempDir() + "/stat_test";
  auto write = [&](const std::string& line) {
    std::ofstream(path) << line << "\ncpu0 1 2 3 4\n";
  };
  write("cpu  100 0 100 800 0 0 0 0 0 0");
  OsCpuProvider p(path);
  ASSERT_TRUE(p.read());
  // 100 more busy ticks out of 400 total.
  write("cpu  150 0 150 1100 0 0 0 0 0 0");
  EXPECT_EQ(p.read(), 25);
  OsCpuProvider missing("/nonexistent/stat");
  EXPECT_FALSE(missing.read());
  EXPECT_FALSE(sample_cpu(missing));
}

TEST(Cpu, FunctionProviderPassthrough) {
  FunctionCpuProvider p([] { return std::optional<int>(25); });
  EXPECT_EQ(sample_cpu(p), 25);
  FunctionCpuProvider bad([] { return std::optional<int>(150); });
  EXPECT_FALSE(sample_cpu(bad));
}

TEST(Stan, SequenceWraps) {
  StanSequence s(999998);
  EXPECT_EQ(s.next(), "999998");
  EXPECT_EQ(s.next(), "999999");
  EXPECT_EQ(s.next(), "000001");
}

class EchoFixture : public ::testing::Test {
 protected:
  void SetUp() override { sim_.start(); }
  void TearDown() override { sim_.stop(); }
  fds::FdsSim sim_{testsupport::fast_sim("echo", false)};
  const iso8583::FieldDictionary& dict_ = iso8583::FieldDictionary::default_dictionary();
};

TEST_F(EchoFixture, HealthyBackendAnswers) {
  EchoResult r = echo_probe(sim_.traffic_endpoint(), dict_, 1000, "000001");
  ASSERT_TRUE(r.ok());
  EXPECT_LT(r.rtt_ms, 1000);
  auto d = iso8583::decode_message(r.reply, dict_);
  EXPECT_TRUE(d.verdict.is_standard());
  EXPECT_EQ(d.message, iso8583::IsoMessage(iso8583::Mti("0810"), {{11, "000001"}, {39, "00"}, {70, "301"}}));
}

TEST_F(EchoFixture, StoppedBackendTimesOut) {
  sim_.inject_fault(fds::FaultKind::stop_processing);
  EchoResult r = echo_probe(sim_.traffic_endpoint(), dict_, 300, "000002");
  EXPECT_EQ(r.status, EchoStatus::timeout);
}

TEST_F(EchoFixture, AgentServesBody) {
  auto fetched = fetch_health(sim_.health_endpoint(), 2000);
  ASSERT_TRUE(fetched.body);
  EXPECT_EQ(fetched.body->cpu_pct, 5);
  ASSERT_TRUE(fetched.body->iso_present);
  EXPECT_EQ(iso8583::decode_message(fetched.body->iso, dict_).message.mti.str(), "0810");
  sim_.inject_fault(fds::FaultKind::cpu_override, 25);
  sim_.inject_fault(fds::FaultKind::stop_processing);
  fetched = fetch_health(sim_.health_endpoint(), 2000);
  ASSERT_TRUE(fetched.body);
  EXPECT_EQ(fetched.body->cpu_pct, 25);
  EXPECT_FALSE(fetched.body->iso_present);
}

TEST(Echo, RefusedWithoutListener) {
  net::Socket s = net::Socket::listen({"127.0.0.1", 0});
  net::Endpoint ep{"127.0.0.1", s.local_port()};
  s.close();
  EXPECT_EQ(echo_probe(ep, iso8583::FieldDictionary::default_dictionary(), 500, "000001").status,
            EchoStatus::refused);
}

TEST(Echo, NonStandardAndMismatchedReplies) {
  const auto& dict = iso8583::FieldDictionary::default_dictionary();
  testsupport::StubBackend garbage([](const std::string& p) { return p + "|"; });
  EXPECT_EQ(echo_probe(garbage.endpoint(), dict, 500, "000001").status, EchoStatus::non_standard_reply);
  testsupport::StubBackend wrong_stan([&](const std::string&) {
    return iso8583::encode_message(
        iso8583::IsoMessage(iso8583::Mti("0810"), {{11, "123456"}, {39, "00"}, {70, "301"}}), dict);
  });
  EXPECT_EQ(echo_probe(wrong_stan.endpoint(), dict, 500, "000001").status, EchoStatus::non_standard_reply);
  testsupport::StubBackend wrong_mti([&](const std::string&) {
    return iso8583::encode_message(iso8583::IsoMessage(iso8583::Mti("0210"), {{11, "000001"}}), dict);
  });
  EXPECT_EQ(echo_probe(wrong_mti.endpoint(), dict, 500, "000001").status, EchoStatus::non_standard_reply);
}

TEST(Agent, CpuReadFailureIsMalformed) {
  testsupport::StubBackend backend([](const std::string&) { return std::nullopt; });
  AgentConfig cfg;
  cfg.backend = backend.endpoint();
  cfg.echo_timeout_ms = 100;
  HealthAgent agent(cfg, std::make_shared<FunctionCpuProvider>([] { return std::optional<int>(); }));
  agent.start();
  auto fetched = fetch_health({"127.0.0.1", agent.port()}, 2000);
  EXPECT_FALSE(fetched.body);
  EXPECT_EQ(fetched.error, FailReason::malformed);
  agent.stop();
}

TEST(Agent, ReportsProviderCpuAndEchoFailure) {
  testsupport::StubBackend backend([](const std::string&) { return std::nullopt; });
  AgentConfig cfg;
  cfg.backend = backend.endpoint();
  cfg.echo_timeout_ms = 100;
  HealthAgent agent(cfg, std::make_shared<FunctionCpuProvider>([] { return std::optional<int>(12); }));
  agent.start();
  auto fetched = fetch_health({"127.0.0.1", agent.port()}, 2000);
  ASSERT_TRUE(fetched.body);
  EXPECT_EQ(fetched.body->cpu_pct, 12);
  EXPECT_FALSE(fetched.body->iso_present);
  ASSERT_TRUE(agent.last_sample());
  EXPECT_EQ(agent.last_sample()->echo.status, EchoStatus::timeout);
  agent.stop();
}

TEST(Fetch, UnreachableAndGarbage) {
  net::Socket s = net::Socket::listen({"127.0.0.1", 0});
  net::Endpoint closed{"127.0.0.1", s.local_port()};
  s.close();
  EXPECT_EQ(fetch_health(closed, 500).error, FailReason::unreachable);

  httplib::Server srv;
  srv.Get("/health", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("hello world", "text/plain");
  });
  const int port = srv.bind_to_any_port("127.0.0.1");
  std::thread t([&] { srv.listen_after_bind(); });
  srv.wait_until_ready();
  EXPECT_EQ(fetch_health({"127.0.0.1", static_cast<std::uint16_t>(port)}, 1000).error, FailReason::malformed);
  srv.stop();
  t.join();
}
