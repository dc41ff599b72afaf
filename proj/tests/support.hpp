#pragma once

// Shared test fixtures: independent oracles, random message builders,
// scripted health sources and a reply-anything stub backend.

#include <chrono>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "isoha/fds_sim.hpp"
#include "isoha/iso8583.hpp"
#include "isoha/monitor.hpp"
#include "isoha/net.hpp"

namespace testsupport {

using namespace isoha;

// Per-bit oracle: bit i lives in hex char (i-1)/4 at nibble weight 8 >> ((i-1)%4).
inline std::string oracle_bitmap_hex(const std::set<int>& fields) {
  bool secondary = false;
  for (int f : fields) secondary = secondary || f > 64;
  const int bits = secondary ? 128 : 64;
  std::string out;
  for (int c = 0; c < bits / 4; ++c) {
    int nibble = 0;
    for (int k = 0; k < 4; ++k) {
      const int bit = c * 4 + k + 1;
      const bool on = fields.count(bit) > 0 || (bit == 1 && secondary);
      if (on) nibble |= 8 >> k;
    }
    out.push_back("0123456789ABCDEF"[nibble]);
  }
  return out;
}

inline std::set<int> oracle_bitmap_fields(const std::string& hex) {
  std::set<int> out;
  for (std::size_t c = 0; c < hex.size(); ++c) {
    const char ch = hex[c];
    const int v = ch <= '9' ? ch - '0' : ch - 'A' + 10;
    for (int k = 0; k < 4; ++k) {
      if (v & (8 >> k)) out.insert(static_cast<int>(c) * 4 + k + 1);
    }
  }
  return out;
}

inline std::string random_value(std::mt19937_64& rng, const iso8583::FieldSpec& spec) {
  int len = spec.format.length;
  if (spec.format.kind != iso8583::LengthKind::fixed) {
    len = std::uniform_int_distribution<int>(0, spec.format.length)(rng);
  }
  static const std::string digits = "0123456789";
  static const std::string alnum = "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz";
  std::string special;
  for (char c = 0x20; c <= 0x7E; ++c) special.push_back(c);
  const std::string& alphabet = spec.content == iso8583::ContentClass::numeric    ? digits
                                : spec.content == iso8583::ContentClass::alphanum ? alnum
                                                                                  : special;
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  std::string v;
  for (int i = 0; i < len; ++i) v.push_back(alphabet[pick(rng)]);
  return v;
}

// Random dictionary-valid message: random MTI digits, random field subset.
inline iso8583::IsoMessage random_message(std::mt19937_64& rng, const iso8583::FieldDictionary& dict) {
  std::string mti;
  for (int i = 0; i < 4; ++i) mti.push_back(static_cast<char>('0' + rng() % 10));
  iso8583::IsoMessage m(iso8583::Mti(mti), {});
  for (const auto& [n, spec] : dict.specs()) {
    if (rng() % 2) m.fields[n] = random_value(rng, spec);
  }
  return m;
}

// Hand-assembled layout used as an oracle for encode_message.
inline std::string oracle_encode(const iso8583::IsoMessage& m, const iso8583::FieldDictionary& dict) {
  std::set<int> fields;
  for (const auto& [n, _] : m.fields) fields.insert(n);
  std::string out(m.mti.str());
  out += oracle_bitmap_hex(fields);
  for (const auto& [n, v] : m.fields) {
    const auto* spec = dict.find(n);
    if (spec->format.kind == iso8583::LengthKind::llvar) {
      out += (v.size() < 10 ? "0" : "") + std::to_string(v.size());
    } else if (spec->format.kind == iso8583::LengthKind::lllvar) {
      std::string len = std::to_string(v.size());
      out += std::string(3 - len.size(), '0') + len;
    }
    out += v;
  }
  return out;
}

inline iso8583::IsoMessage sample_request(const std::string& stan) {
  return iso8583::IsoMessage(iso8583::Mti("0200"), {{2, "4000001234567899"},
                                                    {3, "000000"},
                                                    {4, "000000010000"},
                                                    {7, "1014120000"},
                                                    {11, stan},
                                                    {41, "TERM0001"}});
}

inline std::string stan_of(int i) {
  std::string s = std::to_string(i % 999999 + 1);
  return std::string(6 - s.size(), '0') + s;
}

// A fast, order-preserving simulator for wire tests.
inline fds::SimConfig fast_sim(const std::string& id, bool record = true) {
  fds::SimConfig c;
  c.id = id;
  c.workers = 1;
  c.service_time_ms = 0.01;
  c.queue_capacity = 100000;
  c.queue_timeout_ms = 60000;
  c.warmup_ms = 0;
  c.record_digests = record;
  c.echo_timeout_ms = 500;
  return c;
}

// Health outcomes decided by a function of (member id, call index).
class ScriptedSource : public monitor::HealthSource {
 public:
  using Script = std::function<health::Evaluation(const std::string& id)>;
  explicit ScriptedSource(Script script) : script_(std::move(script)) {}

  monitor::PollOutcome poll(const pool::PoolMember& member) override {
    Script s;
    {
      std::lock_guard lock(mu_);
      s = script_;
    }
    return {s(member.id), std::nullopt};
  }
  void set(Script script) {
    std::lock_guard lock(mu_);
    script_ = std::move(script);
  }

 private:
  std::mutex mu_;
  Script script_;
};

inline ScriptedSource::Script all_pass() {
  return [](const std::string&) { return health::Evaluation::passed(); };
}

inline ScriptedSource::Script fail_member(const std::string& bad, health::FailReason reason) {
  return [bad, reason](const std::string& id) {
    return id == bad ? health::Evaluation::failed(reason) : health::Evaluation::passed();
  };
}

// Framed server that answers every payload via `reply` (after `delay`),
// whatever its content. Records payloads in arrival order.
class StubBackend {
 public:
  using Reply = std::function<std::optional<std::string>(const std::string&)>;

  StubBackend(Reply reply, std::chrono::milliseconds delay = std::chrono::milliseconds(0))
      : reply_(std::move(reply)), delay_(delay), listener_(net::Socket::listen({"127.0.0.1", 0})) {
    port_ = listener_.local_port();
    acceptor_ = std::thread([this] {
      for (;;) {
        net::Socket s = listener_.accept();
        if (!s.valid()) return;
        auto sock = std::make_shared<net::Socket>(std::move(s));
        std::lock_guard lock(mu_);
        clients_.push_back(sock);
        workers_.emplace_back([this, sock] { serve(sock); });
      }
    });
  }
  ~StubBackend() {
    listener_.shutdown();
    acceptor_.join();
    {
      std::lock_guard lock(mu_);
      for (auto& c : clients_) c->shutdown();
    }
    for (auto& t : workers_) t.join();
  }

  net::Endpoint endpoint() const { return {"127.0.0.1", port_}; }
  std::vector<std::string> received() const {
    std::lock_guard lock(mu_);
    return received_;
  }

 private:
  void serve(std::shared_ptr<net::Socket> sock) {
    framing::FrameBuffer buf;
    char data[8192];
    try {
      for (;;) {
        auto n = sock->recv_some(data, sizeof data, std::nullopt);
        if (!n || *n == 0) return;
        for (const auto& p : buf.push({data, *n})) {
          {
            std::lock_guard lock(mu_);
            received_.push_back(p);
          }
          if (auto r = reply_(p)) {
            std::this_thread::sleep_for(delay_);
            sock->send_all(framing::encode_frame(*r));
          }
        }
      }
    } catch (const std::exception&) {
    }
  }

  Reply reply_;
  std::chrono::milliseconds delay_;
  net::Socket listener_;
  std::uint16_t port_ = 0;
  std::thread acceptor_;
  mutable std::mutex mu_;
  std::vector<std::shared_ptr<net::Socket>> clients_;
  std::vector<std::thread> workers_;
  std::vector<std::string> received_;
};

// Reference debounce: UP->DOWN when the last `fall` results are all FAIL,
// DOWN->UP when the last `rise` are all PASS.
inline std::vector<health::MemberState> reference_fold(const std::vector<bool>& results, int fall, int rise) {
  std::vector<health::MemberState> states;
  health::MemberState s = health::MemberState::up;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const int need = s == health::MemberState::up ? fall : rise;
    const bool want = s == health::MemberState::down;  // PASS flips DOWN, FAIL flips UP
    bool flip = static_cast<int>(i) + 1 >= need;
    for (int k = 0; flip && k < need; ++k) flip = results[i - k] == want;
    if (flip) s = s == health::MemberState::up ? health::MemberState::down : health::MemberState::up;
    states.push_back(s);
  }
  return states;
}

inline bool wait_for(const std::function<bool()>& cond, int timeout_ms = 5000) {
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
  while (std::chrono::steady_clock::now() < deadline) {
    if (cond()) return true;
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  return cond();
}

}  // namespace testsupport
