#include "isoha/cli.hpp"

#include <signal.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "isoha/fds_sim.hpp"
#include "isoha/health.hpp"
#include "isoha/loadgen.hpp"
#include "isoha/log.hpp"
#include "isoha/metrics.hpp"
#include "isoha/proxy.hpp"

namespace isoha::cli {

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

sigset_t shutdown_signals() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  return set;
}

// Must run before any service thread starts so they inherit the mask.
void block_shutdown_signals() {
  sigset_t set = shutdown_signals();
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
}

void wait_for_shutdown() {
  sigset_t set = shutdown_signals();
  int sig = 0;
  sigwait(&set, &sig);
  log::get()->info("signal {}, shutting down", sig);
}

net::Endpoint endpoint_arg(const std::string& flag, const std::string& value) {
  try {
    return net::Endpoint::parse(value);
  } catch (const net::NetError& e) {
    throw UsageError(flag + ": " + e.what());
  }
}

std::vector<std::string> split_events(const std::string& reply) {
  std::vector<std::string> out;
  if (reply == "none") return out;
  std::size_t pos = 0;
  for (;;) {
    auto sep = reply.find(" | ", pos);
    out.push_back(reply.substr(pos, sep - pos));
    if (sep == std::string::npos) break;
    pos = sep + 3;
  }
  return out;
}

std::uint64_t stat_field(const std::string& line, const std::string& key) {
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) {
    if (tok.rfind(key + "=", 0) == 0) return std::stoull(tok.substr(key.size() + 1));
  }
  throw net::NetError("stats reply lacks " + key + ": " + line);
}

// ---------------------------------------------------------------------------
// Demo plumbing

class Transcript {
 public:
  explicit Transcript(std::ostream& out) : out_(out), t0_(net::steady_ms()) {}

  void step(const std::string& line) {
    std::ostringstream s;
    s << '[' << std::fixed << std::setprecision(3) << std::setw(7) << (net::steady_ms() - t0_) / 1000.0 << "s] "
      << line << '\n';
    out_ << s.str() << std::flush;
  }

  bool check(bool ok, const std::string& what) {
    step(std::string(ok ? "PASS " : "FAIL ") + what);
    if (!ok) failed_ = true;
    return ok;
  }

  bool failed() const { return failed_; }

 private:
  std::ostream& out_;
  std::int64_t t0_;
  bool failed_ = false;
};

struct ClientRecord {
  std::int64_t sent_ms = 0;
  std::int64_t conn_opened_ms = 0;
  bool ok = false;
};

// Paced request/response client that reconnects whenever its session ends.
class DemoClient {
 public:
  DemoClient(net::Endpoint target, int tps) : target_(std::move(target)), tps_(tps) {}
  ~DemoClient() { stop(); }

  void start() {
    thread_ = std::thread([this] { loop(); });
  }
  void stop() {
    stop_ = true;
    if (thread_.joinable()) thread_.join();
  }
  std::vector<ClientRecord> records() const {
    std::lock_guard lock(mu_);
    return records_;
  }

 private:
  void loop() {
    const auto& dict = iso8583::FieldDictionary::default_dictionary();
    loadgen::MessageGenerator gen(7);
    std::optional<net::FramedConnection> conn;
    std::int64_t opened = 0;
    auto next = std::chrono::steady_clock::now();
    while (!stop_) {
      next += std::chrono::microseconds(1000000 / tps_);
      if (!conn) {
        try {
          conn.emplace(net::Socket::connect(target_, net::Millis(500)));
          opened = net::steady_ms();
        } catch (const net::NetError&) {
          std::this_thread::sleep_until(next);
          continue;
        }
      }
      iso8583::IsoMessage req = gen.next();
      ClientRecord rec{net::steady_ms(), opened, false};
      try {
        conn->send(iso8583::encode_message(req, dict));
        auto reply = conn->receive(net::Millis(1000));
        if (reply) {
          auto d = iso8583::decode_message(*reply, dict);
          rec.ok = d.verdict.is_standard() && d.message.mti.str() == "0210" && d.message.field(11) &&
                   *d.message.field(11) == req.fields[11];
        }
        if (!reply) conn.reset();
      } catch (const net::NetError&) {
        conn.reset();
      }
      {
        std::lock_guard lock(mu_);
        records_.push_back(rec);
      }
      std::this_thread::sleep_until(next);
    }
  }

  net::Endpoint target_;
  int tps_;
  std::atomic<bool> stop_{false};
  std::thread thread_;
  mutable std::mutex mu_;
  std::vector<ClientRecord> records_;
};

struct DemoRig {
  std::unique_ptr<fds::FdsSim> primary;
  std::unique_ptr<fds::FdsSim> standby;
  std::unique_ptr<proxy::FailoverProxy> proxy;

  static fds::SimConfig sim_config(const std::string& id) {
    fds::SimConfig c;
    c.id = id;
    c.echo_timeout_ms = 500;
    return c;
  }

  void start_backends() {
    primary = std::make_unique<fds::FdsSim>(sim_config("primary"));
    standby = std::make_unique<fds::FdsSim>(sim_config("standby"));
    primary->start();
    standby->start();
  }

  void start_proxy(pool::Mode mode) {
    proxy::ProxyConfig c;
    c.primary_traffic = primary->traffic_endpoint();
    c.primary_health = primary->health_endpoint();
    c.standby_traffic = standby->traffic_endpoint();
    c.standby_health = standby->health_endpoint();
    c.mode = mode;
    c.admin = net::Endpoint{"127.0.0.1", 0};
    c.thresholds.echo_timeout_ms = 500;
    proxy = std::make_unique<proxy::FailoverProxy>(c);
    proxy->start();
  }

  void stop_proxy() {
    if (proxy) proxy->stop();
    proxy.reset();
  }

  std::string admin(const std::string& cmd) const { return net::line_request(proxy->admin_endpoint(), cmd); }

  ~DemoRig() {
    stop_proxy();
    if (primary) primary->stop();
    if (standby) standby->stop();
  }
};

bool wait_until(const std::function<bool()>& cond, int timeout_ms, int step_ms = 50) {
  const std::int64_t deadline = net::steady_ms() + timeout_ms;
  while (net::steady_ms() < deadline) {
    if (cond()) return true;
    std::this_thread::sleep_for(std::chrono::milliseconds(step_ms));
  }
  return cond();
}

bool failover_demo(Scenario s, Transcript& t) {
  const bool cpu = s == Scenario::cpu_failover;
  const std::string fault = cpu ? "cpu 25" : "stop";
  const pool::SwitchReason expected = cpu ? pool::SwitchReason::cpu_over : pool::SwitchReason::echo;

  DemoRig rig;
  rig.start_backends();
  t.step("backends up: primary traffic=" + rig.primary->traffic_endpoint().str() +
         " standby traffic=" + rig.standby->traffic_endpoint().str());
  rig.start_proxy(pool::Mode::active_passive);
  const auto& th = rig.proxy->monitor().thresholds();
  const int bound_ms = cpu ? 4000 : th.poll_interval_ms * th.fall_count + 1000;
  t.step("proxy up: listen=" + rig.proxy->endpoint().str() + " admin=" + rig.proxy->admin_endpoint().str() +
         " poll=" + std::to_string(th.poll_interval_ms) + "ms fall=" + std::to_string(th.fall_count));

  bool primary_active = wait_until([&] { return rig.admin("status").rfind("active=primary", 0) == 0; }, 5000);
  t.step("status: " + rig.admin("status"));
  if (!t.check(primary_active, "primary is active before the fault")) return false;

  DemoClient client(rig.proxy->endpoint(), 20);
  client.start();
  std::this_thread::sleep_for(std::chrono::milliseconds(2000));
  auto before = client.records();
  std::size_t ok_before = std::count_if(before.begin(), before.end(), [](const auto& r) { return r.ok; });
  t.check(ok_before > 0 && ok_before == before.size(),
          "pre-fault traffic: " + std::to_string(ok_before) + "/" + std::to_string(before.size()) + " answered");

  const std::int64_t injected = net::steady_ms();
  const std::string reply = net::line_request(rig.primary->control_endpoint(), fault);
  t.step("inject '" + fault + "' on primary control port: " + reply);

  std::vector<std::string> events;
  wait_until([&] {
    events = split_events(rig.admin("events"));
    return !events.empty();
  }, bound_ms + 3000, 100);
  if (!t.check(!events.empty(), "switch event logged")) {
    client.stop();
    return false;
  }
  pool::SwitchEvent ev = pool::SwitchEvent::parse_log_line(events.front());
  const std::int64_t latency = ev.at_ms - injected;
  t.step("event: " + events.front());
  t.check(ev.reason == expected, "reason=" + pool::to_string(expected));
  t.check(ev.from == "primary" && ev.to == "standby", "switched primary -> standby");
  t.check(latency <= bound_ms,
          "detected " + std::to_string(latency) + "ms after injection (bound " + std::to_string(bound_ms) + "ms)");

  std::this_thread::sleep_for(std::chrono::milliseconds(3000));
  client.stop();
  auto records = client.records();
  std::size_t post = 0, post_err = 0;
  for (const auto& r : records) {
    if (r.conn_opened_ms < ev.at_ms) continue;
    ++post;
    if (!r.ok) ++post_err;
  }
  t.step("post-switch messages=" + std::to_string(post) + " errors=" + std::to_string(post_err));
  t.check(post > 0 && post_err == 0, "post-switch error count 0");
  t.step("status: " + rig.admin("status"));
  t.check(split_events(rig.admin("events")).size() == 1, "exactly one switch event");
  t.step("standby stats: " + net::line_request(rig.standby->control_endpoint(), "stats"));
  return !t.failed();
}

std::uint64_t backend_nonstandard(const DemoRig& rig) {
  return stat_field(net::line_request(rig.primary->control_endpoint(), "stats"), "nonstandard") +
         stat_field(net::line_request(rig.standby->control_endpoint(), "stats"), "nonstandard");
}

bool baseline_demo(Transcript& t) {
  DemoRig rig;
  rig.start_backends();
  t.step("backends up: primary traffic=" + rig.primary->traffic_endpoint().str() +
         " standby traffic=" + rig.standby->traffic_endpoint().str());

  loadgen::LoadProfile profile;
  profile.tps = 25;
  profile.interval_s = 4;
  profile.seed = 11;

  struct Phase {
    pool::Mode mode;
    std::uint64_t nonstandard = 0;
    loadgen::StressReport report;
  };
  std::vector<Phase> phases{{pool::Mode::round_robin_per_message, 0, {}}, {pool::Mode::active_passive, 0, {}}};
  for (auto& phase : phases) {
    rig.start_proxy(phase.mode);
    t.step("proxy mode=" + pool::to_string(phase.mode) + " listen=" + rig.proxy->endpoint().str());
    const std::uint64_t base = backend_nonstandard(rig);
    phase.report = loadgen::run_profile(profile, rig.proxy->endpoint(), std::nullopt);
    // The backends classify asynchronously; let the last frames land.
    const std::uint64_t expect = phase.mode == pool::Mode::active_passive ? 0 : phase.report.samples;
    wait_until([&] { return backend_nonstandard(rig) - base >= expect; }, 2000);
    phase.nonstandard = backend_nonstandard(rig) - base;
    t.step("sent=" + std::to_string(phase.report.samples) + " client errors=" + std::to_string(phase.report.errors) +
           " backend non-standard=" + std::to_string(phase.nonstandard));
    t.step("proxy stats: " + rig.admin("stats"));
    rig.stop_proxy();
  }
  t.check(phases[0].nonstandard > 0, "round-robin splice: backend non-standard count > 0");
  t.check(phases[1].nonstandard == 0, "active-passive: backend non-standard count = 0");
  t.check(phases[1].report.errors == 0, "active-passive: every message answered");
  t.step("primary verdicts: " + net::line_request(rig.primary->control_endpoint(), "stats"));
  return !t.failed();
}

// ---------------------------------------------------------------------------
// Subcommands

std::vector<int> positive_list(const std::vector<int>& v, const std::string& flag) {
  for (int x : v) {
    if (x < 1) throw UsageError(flag + " values must be >= 1");
  }
  return v;
}

}  // namespace

std::optional<Scenario> parse_scenario(std::string_view name) {
  if (name == "cpu" || name == "cpu-failover") return Scenario::cpu_failover;
  if (name == "iso" || name == "iso-failover") return Scenario::iso_failover;
  if (name == "baseline" || name == "baseline-defect") return Scenario::baseline_defect;
  return std::nullopt;
}

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::cpu_failover: return "CPU_FAILOVER";
    case Scenario::iso_failover: return "ISO_FAILOVER";
    case Scenario::baseline_defect: return "BASELINE_DEFECT";
  }
  return "?";
}

bool run_demo(Scenario s, std::ostream& out) {
  Transcript t(out);
  t.step("demo " + to_string(s));
  bool ok = false;
  try {
    ok = s == Scenario::baseline_defect ? baseline_demo(t) : failover_demo(s, t);
  } catch (const std::exception& e) {
    t.check(false, std::string("demo aborted: ") + e.what());
    ok = false;
  }
  t.step(std::string(ok ? "RESULT PASS " : "RESULT FAIL ") + to_string(s));
  return ok;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"ISO 8583 active-passive failover proxy, simulated FDS backends and test tooling", "isoha"};
  app.require_subcommand(1, 1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");
  int rc = 0;

  // proxy
  auto* proxy_cmd = app.add_subcommand("proxy", "Run the failover proxy until signalled");
  std::string proxy_config;
  proxy_cmd->add_option("--config", proxy_config, "Proxy config file (key = value)")->required();

  // backend
  auto* backend_cmd = app.add_subcommand("backend", "Run a simulated FDS backend until signalled");
  std::string backend_config, backend_id, backend_listen, backend_health, backend_control;
  backend_cmd->add_option("--config", backend_config, "Backend config file (key = value)");
  backend_cmd->add_option("--id", backend_id, "Backend name");
  backend_cmd->add_option("--listen", backend_listen, "Traffic address host:port");
  backend_cmd->add_option("--health", backend_health, "Health endpoint address host:port");
  backend_cmd->add_option("--control", backend_control, "Fault-injection control address host:port");

  // agent
  auto* agent_cmd = app.add_subcommand("agent", "Run a standalone health agent for an external backend");
  std::string agent_listen, agent_backend;
  int agent_echo_timeout = 1000;
  agent_cmd->add_option("--listen", agent_listen, "Health endpoint address host:port")->required();
  agent_cmd->add_option("--backend", agent_backend, "Backend traffic address probed with 0800")->required();
  agent_cmd->add_option("--echo-timeout-ms", agent_echo_timeout, "Echo probe deadline")->capture_default_str();

  // loadgen
  auto* load_cmd = app.add_subcommand("loadgen", "Stress test: paced 0200 traffic and error-rate report");
  std::string load_target, load_health, load_out, load_sim_config;
  std::vector<int> load_tps{10}, load_interval{60};
  bool load_grid = false, load_simulate = false;
  loadgen::LoadProfile base;
  load_cmd->add_option("--target", load_target, "Framed ISO endpoint (proxy or backend)");
  load_cmd->add_option("--health", load_health, "Health endpoint polled once per second for CPU");
  load_cmd->add_option("--tps", load_tps, "Messages per second (comma list with --grid)")->delimiter(',')->capture_default_str();
  load_cmd->add_option("--interval", load_interval, "Send window in seconds (comma list with --grid)")->delimiter(',')->capture_default_str();
  load_cmd->add_flag("--grid", load_grid, "Run every (tps, interval) pair");
  load_cmd->add_option("--timeout-ms", base.timeout_ms, "Per-message reply deadline")->capture_default_str();
  load_cmd->add_option("--connections", base.connections, "Parallel sessions")->capture_default_str();
  load_cmd->add_option("--seed", base.seed, "Message content seed")->capture_default_str();
  load_cmd->add_option("--out", load_out, "CSV output file (default stdout)");
  load_cmd->add_flag("--simulate", load_simulate, "Use the deterministic queue harness instead of the wire");
  load_cmd->add_option("--sim-config", load_sim_config, "Backend config for --simulate");

  // report
  auto* report_cmd = app.add_subcommand("report", "Daily SLA report and before/after comparison");
  std::string report_in, report_before, report_after, report_out_dir;
  report_cmd->add_option("--in", report_in, "Daily traffic CSV (date,total,standard,nonstandard)");
  report_cmd->add_option("--before", report_before, "Baseline period CSV");
  report_cmd->add_option("--after", report_after, "Comparison period CSV");
  report_cmd->add_option("--out-dir", report_out_dir, "Write daily.csv and tps/error/sla series here");

  // status
  auto* status_cmd = app.add_subcommand("status", "Print the proxy's pool state");
  std::string status_proxy;
  bool status_events = false;
  std::string status_switch;
  status_cmd->add_option("--proxy", status_proxy, "Proxy admin address host:port")->required();
  status_cmd->add_flag("--events", status_events, "Also print the switch event log");
  status_cmd->add_option("--switch", status_switch, "Force the active member (primary|standby)");

  // demo
  auto* demo_cmd = app.add_subcommand("demo", "Run a scenario end to end and print a transcript");
  std::string demo_scenario = "all";
  demo_cmd->add_option("--scenario", demo_scenario, "cpu | iso | baseline | all")->capture_default_str();

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::ParseError& e) {
    // CLI11 writes help to its streams; route them to ours.
    std::ostringstream o, e2;
    app.exit(e, o, e2);
    out << o.str();
    err << e2.str();
    return e.get_exit_code() == 0 ? 0 : 2;
  }

  try {
    if (*proxy_cmd) {
      proxy::ProxyConfig config = proxy::ProxyConfig::load(proxy_config);
      block_shutdown_signals();
      proxy::FailoverProxy p(config);
      p.start();
      out << "proxy listening on " << p.endpoint().str() << " admin " << p.admin_endpoint().str() << std::endl;
      wait_for_shutdown();
      p.stop();
    } else if (*backend_cmd) {
      fds::SimConfig config;
      if (!backend_config.empty()) config = fds::SimConfig::from_config(KeyValueConfig::load(backend_config));
      if (!backend_id.empty()) config.id = backend_id;
      if (!backend_listen.empty()) config.listen = endpoint_arg("--listen", backend_listen);
      if (!backend_health.empty()) config.health = endpoint_arg("--health", backend_health);
      if (!backend_control.empty()) config.control = endpoint_arg("--control", backend_control);
      block_shutdown_signals();
      fds::FdsSim sim(config);
      sim.start();
      out << "backend " << config.id << " traffic " << sim.traffic_endpoint().str() << " health "
          << sim.health_endpoint().str() << " control " << sim.control_endpoint().str() << std::endl;
      wait_for_shutdown();
      sim.stop();
    } else if (*agent_cmd) {
      health::AgentConfig config;
      config.listen = endpoint_arg("--listen", agent_listen);
      config.backend = endpoint_arg("--backend", agent_backend);
      config.echo_timeout_ms = agent_echo_timeout;
      block_shutdown_signals();
      health::HealthAgent agent(config, std::make_shared<health::OsCpuProvider>());
      agent.start();
      out << "agent listening on port " << agent.port() << std::endl;
      wait_for_shutdown();
      agent.stop();
    } else if (*load_cmd) {
      positive_list(load_tps, "--tps");
      positive_list(load_interval, "--interval");
      if (!load_grid && (load_tps.size() != 1 || load_interval.size() != 1)) {
        throw UsageError("several --tps or --interval values need --grid");
      }
      loadgen::ProfileRunner runner;
      fds::SimConfig sim;
      std::optional<net::Endpoint> health;
      net::Endpoint target;
      if (load_simulate) {
        if (!load_sim_config.empty()) sim = fds::SimConfig::from_config(KeyValueConfig::load(load_sim_config));
        runner = [&](const loadgen::LoadProfile& p) { return loadgen::simulate_profile(p, sim); };
      } else {
        if (load_target.empty()) throw UsageError("--target is required unless --simulate");
        target = endpoint_arg("--target", load_target);
        if (!load_health.empty()) health = endpoint_arg("--health", load_health);
        runner = [&](const loadgen::LoadProfile& p) {
          log::get()->info("running tps={} interval={}s", p.tps, p.interval_s);
          return loadgen::run_profile(p, target, health);
        };
      }
      try {
        base.validate();
      } catch (const loadgen::LoadgenError& e) {
        throw UsageError(e.what());
      }
      auto reports = loadgen::sweep_grid(load_tps, load_interval, base, runner);
      const std::string csv = loadgen::to_csv(reports);
      if (load_out.empty()) {
        out << csv;
      } else {
        std::ofstream f(load_out);
        if (!(f << csv)) throw std::runtime_error("cannot write " + load_out);
      }
    } else if (*report_cmd) {
      if (!report_in.empty()) {
        if (!report_before.empty() || !report_after.empty()) throw UsageError("--in excludes --before/--after");
        auto records = metrics::load_traffic_csv(report_in);
        if (records.empty()) throw metrics::MetricsError(report_in + ": no records");
        std::vector<metrics::SlaReport> reports;
        for (const auto& r : records) reports.push_back(metrics::compute_daily_report(r));
        for (const auto& r : reports) out << metrics::format_report(r) << '\n';
        out << metrics::format_report(metrics::compute_period_report(records, "period")) << '\n';
        if (!report_out_dir.empty()) {
          for (const auto& path : metrics::emit_report(reports, report_out_dir)) out << "wrote " << path << '\n';
        }
      } else if (!report_before.empty() && !report_after.empty()) {
        auto cmp = metrics::compare_periods(metrics::load_traffic_csv(report_before),
                                            metrics::load_traffic_csv(report_after));
        out << metrics::format_comparison(cmp) << '\n';
        if (!report_out_dir.empty()) {
          for (const auto& path : metrics::emit_report({cmp.before, cmp.after}, report_out_dir)) {
            out << "wrote " << path << '\n';
          }
        }
      } else {
        throw UsageError("report needs --in or both --before and --after");
      }
    } else if (*status_cmd) {
      net::Endpoint admin = endpoint_arg("--proxy", status_proxy);
      if (!status_switch.empty()) {
        std::string reply = net::line_request(admin, "switch " + status_switch);
        out << reply << '\n';
        if (reply.rfind("ok", 0) != 0) rc = 1;
      }
      out << net::line_request(admin, "status") << '\n';
      if (status_events) {
        for (const auto& line : split_events(net::line_request(admin, "events"))) out << line << '\n';
      }
    } else if (*demo_cmd) {
      std::vector<Scenario> scenarios;
      if (demo_scenario == "all") {
        scenarios = {Scenario::cpu_failover, Scenario::iso_failover, Scenario::baseline_defect};
      } else if (auto s = parse_scenario(demo_scenario)) {
        scenarios = {*s};
      } else {
        throw UsageError("unknown scenario '" + demo_scenario + "' (cpu | iso | baseline | all)");
      }
      for (Scenario s : scenarios) {
        if (!run_demo(s, out)) rc = 1;
      }
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n" << "run with --help for usage\n";
    return 2;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return rc;
}

int dispatch(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace isoha::cli
