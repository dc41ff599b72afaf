#include <httplib.h>

#include <cstdlib>

#include "isoha/health.hpp"
#include "isoha/log.hpp"

namespace isoha::health {

struct HealthAgent::Impl {
  httplib::Server server;
  std::thread thread;
};

HealthAgent::HealthAgent(AgentConfig config, std::shared_ptr<CpuProvider> cpu)
    : config_(std::move(config)), cpu_(std::move(cpu)), impl_(std::make_unique<Impl>()) {
  if (const char* env = std::getenv("HA_HEALTH_PORT"); env && *env) {
    config_.listen.port = static_cast<std::uint16_t>(std::stoi(env));
  }
}

HealthAgent::~HealthAgent() { stop(); }

HealthSample HealthAgent::take_sample() {
  HealthSample s;
  s.taken_at_ms = net::steady_ms();
  auto cpu = sample_cpu(*cpu_);
  if (!cpu) throw std::runtime_error("cpu provider read failure");
  s.cpu_pct = *cpu;
  s.echo = echo_probe(config_.backend, *config_.dict, config_.echo_timeout_ms, stans_.next(),
                      config_.framer);
  std::lock_guard lock(mu_);
  last_ = s;
  return s;
}

std::optional<HealthSample> HealthAgent::last_sample() const {
  std::lock_guard lock(mu_);
  return last_;
}

void HealthAgent::start() {
  auto& server = impl_->server;
  server.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
    try {
      HealthSample s = take_sample();
      res.status = 200;
      res.set_content(render_health_body(s), "text/plain");
    } catch (const std::exception& e) {
      res.status = 503;
      res.set_content(std::string("error=") + e.what() + "\n", "text/plain");
    }
  });
  const std::string host = config_.listen.host.empty() ? "127.0.0.1" : config_.listen.host;
  int port = config_.listen.port;
  if (port == 0) {
    port = server.bind_to_any_port(host);
  } else if (!server.bind_to_port(host, port)) {
    port = -1;
  }
  if (port <= 0) throw net::NetError("health agent cannot bind " + config_.listen.str());
  port_ = static_cast<std::uint16_t>(port);
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  server.wait_until_ready();
  log::get()->debug("health agent on port {} probing {}", port_, config_.backend.str());
}

void HealthAgent::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

FetchResult fetch_health(const net::Endpoint& addr, int timeout_ms) {
  httplib::Client client(addr.host, addr.port);
  const auto sec = timeout_ms / 1000;
  const auto usec = (timeout_ms % 1000) * 1000;
  client.set_connection_timeout(sec, usec);
  client.set_read_timeout(sec, usec);
  client.set_write_timeout(sec, usec);
  auto res = client.Get("/health");
  if (!res) return {std::nullopt, FailReason::unreachable};
  if (res->status != 200) return {std::nullopt, FailReason::malformed};
  try {
    return {parse_health_body(res->body), std::nullopt};
  } catch (const HealthBodyError&) {
    return {std::nullopt, FailReason::malformed};
  }
}

}  // namespace isoha::health
