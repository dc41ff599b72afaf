#include "isoha/pool.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace isoha::pool {

namespace {

std::string normalize(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    c = c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  return out;
}

}  // namespace

std::string to_string(Mode mode) {
  return mode == Mode::active_passive ? "ACTIVE_PASSIVE" : "ROUND_ROBIN_PER_MESSAGE";
}

std::string to_string(Failback failback) { return failback == Failback::manual ? "MANUAL" : "AUTO"; }

std::string to_string(SwitchReason reason) {
  switch (reason) {
    case SwitchReason::cpu_over: return "CPU_OVER";
    case SwitchReason::echo: return "ECHO";
    case SwitchReason::conn_fail: return "CONN_FAIL";
    case SwitchReason::recovery: return "RECOVERY";
    case SwitchReason::operator_request: return "OPERATOR";
  }
  return "?";
}

std::optional<Mode> parse_mode(std::string_view s) {
  const std::string n = normalize(s);
  if (n == "ACTIVE_PASSIVE") return Mode::active_passive;
  if (n == "ROUND_ROBIN_PER_MESSAGE" || n == "ROUND_ROBIN") return Mode::round_robin_per_message;
  return std::nullopt;
}

std::optional<Failback> parse_failback(std::string_view s) {
  const std::string n = normalize(s);
  if (n == "MANUAL") return Failback::manual;
  if (n == "AUTO" || n == "AUTOMATIC") return Failback::automatic;
  return std::nullopt;
}

std::optional<SwitchReason> parse_switch_reason(std::string_view s) {
  for (auto r : {SwitchReason::cpu_over, SwitchReason::echo, SwitchReason::conn_fail,
                 SwitchReason::recovery, SwitchReason::operator_request}) {
    if (to_string(r) == s) return r;
  }
  return std::nullopt;
}

SwitchReason switch_reason_for(health::FailReason reason) {
  switch (reason) {
    case health::FailReason::cpu_over: return SwitchReason::cpu_over;
    case health::FailReason::echo: return SwitchReason::echo;
    case health::FailReason::unreachable:
    case health::FailReason::malformed: return SwitchReason::conn_fail;
  }
  return SwitchReason::conn_fail;
}

std::string SwitchEvent::to_log_line() const {
  return "ts=" + std::to_string(at_ms) + " from=" + from.value_or("none") + " to=" + to.value_or("none") +
         " reason=" + to_string(reason);
}

SwitchEvent SwitchEvent::parse_log_line(std::string_view line) {
  SwitchEvent ev;
  std::istringstream in{std::string(line)};
  std::string token;
  int seen = 0;
  while (in >> token) {
    auto eq = token.find('=');
    if (eq == std::string::npos) throw PoolError("bad event token '" + token + "'");
    const std::string key = token.substr(0, eq);
    const std::string value = token.substr(eq + 1);
    auto member = [&]() -> std::optional<std::string> {
      if (value == "none") return std::nullopt;
      return value;
    };
    if (key == "ts") {
      ev.at_ms = std::stoll(value);
    } else if (key == "from") {
      ev.from = member();
    } else if (key == "to") {
      ev.to = member();
    } else if (key == "reason") {
      auto r = parse_switch_reason(value);
      if (!r) throw PoolError("unknown switch reason '" + value + "'");
      ev.reason = *r;
    } else {
      throw PoolError("unknown event key '" + key + "'");
    }
    ++seen;
  }
  if (seen != 4) throw PoolError("event line needs ts, from, to and reason");
  return ev;
}

// ---------------------------------------------------------------------------
// Pool

Pool::Pool(PoolMember primary, PoolMember standby, Mode mode, Failback failback)
    : members_{std::move(primary), std::move(standby)}, mode_(mode), failback_(failback) {
  members_[0].role = MemberRole::primary;
  members_[1].role = MemberRole::standby;
  if (members_[0].id == members_[1].id) throw PoolError("pool members need distinct ids");
  active_id_ = select_active();
}

const PoolMember& Pool::member(std::string_view id) const {
  for (const auto& m : members_) {
    if (m.id == id) return m;
  }
  throw PoolError("no pool member '" + std::string(id) + "'");
}

PoolMember& Pool::mutable_member(std::string_view id) {
  return const_cast<PoolMember&>(std::as_const(*this).member(id));
}

const PoolMember* Pool::active() const { return active_id_ ? &member(*active_id_) : nullptr; }

std::optional<std::string> Pool::select_active() const {
  const PoolMember& p = primary();
  if (failback_ == Failback::automatic && p.up()) return p.id;
  if (const PoolMember* cur = active(); cur && cur->up()) return cur->id;
  for (const auto& m : members_) {
    if (m.up()) return m.id;
  }
  return std::nullopt;
}

std::optional<SwitchEvent> Pool::apply_health_update(std::string_view id, health::MemberHealth h,
                                                     std::int64_t now_ms) {
  mutable_member(id).health_state = std::move(h);
  auto next = select_active();
  if (next == active_id_) return std::nullopt;

  SwitchEvent ev;
  ev.at_ms = now_ms;
  ev.from = active_id_;
  ev.to = next;
  const PoolMember* old = active();
  if (old && !old->up()) {
    auto why = old->health_state.last_fail_reason;
    ev.reason = why ? switch_reason_for(*why) : SwitchReason::conn_fail;
  } else {
    ev.reason = SwitchReason::recovery;
  }
  active_id_ = next;
  return ev;
}

std::optional<SwitchEvent> Pool::force_active(std::string_view id, std::int64_t now_ms) {
  const PoolMember& target = member(id);
  if (!target.up()) throw PoolError("member '" + std::string(id) + "' is DOWN");
  if (active_id_ == target.id) return std::nullopt;
  SwitchEvent ev{now_ms, active_id_, target.id, SwitchReason::operator_request};
  active_id_ = target.id;
  return ev;
}

std::string Pool::status_line() const {
  return "active=" + active_id_.value_or("none") + " primary=" + to_string(primary().health_state.state) +
         " standby=" + to_string(standby().health_state.state) + " mode=" + to_string(mode_);
}

}  // namespace isoha::pool
