#pragma once

// Two-member active/passive pool: which member takes new sessions, and the
// switch events produced when health changes.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include "isoha/health.hpp"
#include "isoha/net.hpp"

namespace isoha::pool {

enum class MemberRole { primary, standby };
enum class Mode { active_passive, round_robin_per_message };
enum class Failback { manual, automatic };
enum class SwitchReason { cpu_over, echo, conn_fail, recovery, operator_request };

std::string to_string(Mode mode);
std::string to_string(Failback failback);
std::string to_string(SwitchReason reason);
std::optional<Mode> parse_mode(std::string_view s);
std::optional<Failback> parse_failback(std::string_view s);
std::optional<SwitchReason> parse_switch_reason(std::string_view s);

// Health failures map onto switch reasons; unreachable and malformed
// health endpoints become CONN_FAIL.
SwitchReason switch_reason_for(health::FailReason reason);

struct PoolMember {
  std::string id;
  net::Endpoint traffic;
  net::Endpoint health_addr;
  MemberRole role = MemberRole::primary;
  health::MemberHealth health_state;

  bool up() const { return health_state.state == health::MemberState::up; }
};

struct SwitchEvent {
  std::int64_t at_ms = 0;
  std::optional<std::string> from;
  std::optional<std::string> to;
  SwitchReason reason = SwitchReason::operator_request;

  // ts=<ms> from=<id|none> to=<id|none> reason=<REASON>
  std::string to_log_line() const;
  static SwitchEvent parse_log_line(std::string_view line);
};

class PoolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Pool {
 public:
  Pool(PoolMember primary, PoolMember standby, Mode mode = Mode::active_passive,
       Failback failback = Failback::manual);

  const std::array<PoolMember, 2>& members() const { return members_; }
  const PoolMember& member(std::string_view id) const;
  const PoolMember& primary() const { return members_[0]; }
  const PoolMember& standby() const { return members_[1]; }
  const PoolMember* active() const;
  const std::optional<std::string>& active_id() const { return active_id_; }
  Mode mode() const { return mode_; }
  Failback failback() const { return failback_; }

  // Current active if UP, else the other member if UP, else none. With
  // AUTO failback a healthy primary is preferred over a serving standby.
  std::optional<std::string> select_active() const;

  // Stores the member's new health and recomputes the active member.
  // Returns an event only when the active member changed.
  std::optional<SwitchEvent> apply_health_update(std::string_view id, health::MemberHealth health,
                                                 std::int64_t now_ms);

  // Operator-initiated switch to an UP member.
  std::optional<SwitchEvent> force_active(std::string_view id, std::int64_t now_ms);

  // status line: active=<id|none> primary=<UP|DOWN> standby=<UP|DOWN> mode=<...>
  std::string status_line() const;

 private:
  PoolMember& mutable_member(std::string_view id);

  std::array<PoolMember, 2> members_;
  std::optional<std::string> active_id_;
  Mode mode_;
  Failback failback_;
};

}  // namespace isoha::pool
