#include "isoha/health.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace isoha::health {

std::string to_string(EchoStatus status) {
  switch (status) {
    case EchoStatus::ok: return "OK";
    case EchoStatus::timeout: return "TIMEOUT";
    case EchoStatus::refused: return "REFUSED";
    case EchoStatus::non_standard_reply: return "NON_STANDARD_REPLY";
  }
  return "?";
}

std::string to_string(FailReason reason) {
  switch (reason) {
    case FailReason::cpu_over: return "CPU_OVER";
    case FailReason::echo: return "ECHO";
    case FailReason::unreachable: return "UNREACHABLE";
    case FailReason::malformed: return "MALFORMED";
  }
  return "?";
}

std::string to_string(MemberState state) { return state == MemberState::up ? "UP" : "DOWN"; }

void HealthThresholds::validate() const {
  if (cpu_max_pct < 1 || cpu_max_pct > 100) throw std::invalid_argument("cpu_max_pct must be in 1..100");
  if (echo_timeout_ms < 1) throw std::invalid_argument("echo_timeout_ms must be positive");
  if (fall_count < 1) throw std::invalid_argument("fall_count must be positive");
  if (rise_count < 1) throw std::invalid_argument("rise_count must be positive");
  if (poll_interval_ms < 1) throw std::invalid_argument("poll_interval_ms must be positive");
}

Evaluation evaluate_sample(const HealthSample& sample, const HealthThresholds& t) {
  if (sample.cpu_pct >= t.cpu_max_pct) return Evaluation::failed(FailReason::cpu_over);
  if (!sample.echo.ok()) return Evaluation::failed(FailReason::echo);
  return Evaluation::passed();
}

StateUpdate update_member_state(MemberHealth m, const Evaluation& result, const HealthThresholds& t) {
  StateUpdate out;
  if (result.pass) {
    m.consecutive_fail = 0;
    ++m.consecutive_pass;
    if (m.state == MemberState::down && m.consecutive_pass >= t.rise_count) {
      m.state = MemberState::up;
      out.transition = MemberState::up;
    }
  } else {
    m.consecutive_pass = 0;
    ++m.consecutive_fail;
    m.last_fail_reason = result.reason;
    if (m.state == MemberState::up && m.consecutive_fail >= t.fall_count) {
      m.state = MemberState::down;
      out.transition = MemberState::down;
    }
  }
  out.health = std::move(m);
  return out;
}

// ---------------------------------------------------------------------------
// Body

std::string render_health_body(const HealthSample& sample) {
  std::string out = "cpu=" + std::to_string(sample.cpu_pct) + "\n";
  out += "iso=";
  out += sample.echo.ok() ? sample.echo.reply : std::string("NONE");
  out += "\n";
  return out;
}

HealthBody parse_health_body(std::string_view text) {
  auto take_line = [&](std::string_view prefix) {
    auto nl = text.find('\n');
    if (nl == std::string_view::npos) throw HealthBodyError("health body: missing line '" + std::string(prefix) + "'");
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl + 1);
    if (line.substr(0, prefix.size()) != prefix) {
      throw HealthBodyError("health body: expected '" + std::string(prefix) + "'");
    }
    return line.substr(prefix.size());
  };

  HealthBody body;
  std::string_view cpu = take_line("cpu=");
  int value = -1;
  auto [ptr, ec] = std::from_chars(cpu.data(), cpu.data() + cpu.size(), value);
  if (cpu.empty() || ec != std::errc() || ptr != cpu.data() + cpu.size() || value < 0 || value > 100) {
    throw HealthBodyError("health body: bad cpu value '" + std::string(cpu) + "'");
  }
  body.cpu_pct = value;

  std::string_view iso = take_line("iso=");
  if (iso.empty()) throw HealthBodyError("health body: empty iso value");
  if (!text.empty()) throw HealthBodyError("health body: unexpected trailing content");
  body.iso_present = iso != "NONE";
  if (body.iso_present) body.iso = std::string(iso);
  return body;
}

// ---------------------------------------------------------------------------
// CPU

OsCpuProvider::OsCpuProvider(std::string stat_path) : path_(std::move(stat_path)) {}

std::optional<int> OsCpuProvider::read() {
  std::ifstream in(path_);
  std::string label;
  if (!(in >> label) || label != "cpu") return std::nullopt;
  std::uint64_t total = 0, idle = 0, v = 0;
  for (int i = 0; i < 10 && in >> v; ++i) {
    total += v;
    if (i == 3 || i == 4) idle += v;  // idle + iowait
  }
  if (total == 0) return std::nullopt;

  std::lock_guard lock(mu_);
  const std::uint64_t dt = total - last_total_;
  const std::uint64_t di = idle - last_idle_;
  last_total_ = total;
  last_idle_ = idle;
  if (dt == 0) return 0;
  const auto busy = static_cast<double>(dt - std::min(di, dt)) / static_cast<double>(dt);
  return static_cast<int>(busy * 100.0 + 0.5);
}

std::optional<int> sample_cpu(CpuProvider& provider) {
  std::optional<int> v;
  try {
    v = provider.read();
  } catch (const std::exception&) {
    return std::nullopt;
  }
  if (v && (*v < 0 || *v > 100)) return std::nullopt;
  return v;
}

// ---------------------------------------------------------------------------
// Echo

std::string StanSequence::next() {
  int v = next_.fetch_add(1);
  v = (v - 1) % 999999 + 1;
  std::string s = std::to_string(v);
  return std::string(6 - s.size(), '0') + s;
}

EchoResult echo_probe(const net::Endpoint& addr, const iso8583::FieldDictionary& dict,
                      int timeout_ms, std::string_view stan, const framing::FramerConfig& framer) {
  using namespace iso8583;
  const std::int64_t start = net::steady_ms();
  const std::int64_t deadline = start + timeout_ms;
  try {
    net::FramedConnection conn(net::Socket::connect(addr, net::Millis(timeout_ms)), framer);
    conn.send(encode_message(build_echo_request(stan), dict));
    const std::int64_t left = deadline - net::steady_ms();
    if (left <= 0) return EchoResult::failure(EchoStatus::timeout);
    auto reply = conn.receive(net::Millis(left));
    if (!reply) return EchoResult::failure(EchoStatus::timeout);
    Decoded d = decode_message(*reply, dict);
    if (!d.verdict.is_standard() || d.message.mti != Mti("0810")) {
      return EchoResult::failure(EchoStatus::non_standard_reply);
    }
    const std::string* echoed = d.message.field(11);
    if (!echoed || *echoed != stan) return EchoResult::failure(EchoStatus::non_standard_reply);
    return EchoResult::success(net::steady_ms() - start, std::move(*reply));
  } catch (const net::ConnectRefused&) {
    return EchoResult::failure(EchoStatus::refused);
  } catch (const net::NetError&) {
    // Connect timeout or the peer hung up before answering.
    return EchoResult::failure(net::steady_ms() >= deadline ? EchoStatus::timeout : EchoStatus::refused);
  }
}

}  // namespace isoha::health
