#pragma once

// Thin POSIX TCP layer: RAII sockets, framed connections, and a small
// line-oriented command server used by the control and admin ports.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "isoha/framing.hpp"

namespace isoha::net {

class NetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  // "host:port" or ":port" (host defaults to 127.0.0.1).
  static Endpoint parse(std::string_view text);
  std::string str() const;

  friend bool operator==(const Endpoint&, const Endpoint&) = default;
};

using Millis = std::chrono::milliseconds;

class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  ~Socket();
  Socket(Socket&& other) noexcept : fd_(other.release()) {}
  Socket& operator=(Socket&& other) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  // Throws NetError; `refused()` distinguishes ECONNREFUSED.
  static Socket connect(const Endpoint& ep, Millis timeout);
  static Socket listen(const Endpoint& ep, int backlog = 128);

  bool valid() const { return fd_ >= 0; }
  int fd() const { return fd_; }
  int release();
  void close();
  // Wakes any thread blocked in recv/accept on this socket.
  void shutdown();

  std::uint16_t local_port() const;

  // Invalid socket when the listener was shut down.
  Socket accept();

  void send_all(std::string_view data);
  // 0 bytes means orderly close. nullopt means the wait timed out.
  std::optional<std::size_t> recv_some(char* buf, std::size_t len, std::optional<Millis> timeout);

 private:
  int fd_ = -1;
};

class ConnectRefused : public NetError {
 public:
  using NetError::NetError;
};

// Framed request/response channel over one socket.
class FramedConnection {
 public:
  FramedConnection(Socket sock, framing::FramerConfig config = {});

  void send(std::string_view payload);
  // nullopt on timeout; throws NetError on close or framing errors.
  std::optional<std::string> receive(std::optional<Millis> timeout);

  Socket& socket() { return sock_; }

 private:
  Socket sock_;
  framing::FrameBuffer buffer_;
  framing::FramerConfig config_;
  std::vector<std::string> ready_;
  std::size_t next_ = 0;
};

// Sends one line, returns the reply line (without newline).
std::string line_request(const Endpoint& ep, std::string_view line, Millis timeout = Millis(2000));

// One command per line, one reply line per command.
class LineServer {
 public:
  using Handler = std::function<std::string(std::string_view)>;

  LineServer(Endpoint ep, Handler handler);
  ~LineServer();
  LineServer(const LineServer&) = delete;
  LineServer& operator=(const LineServer&) = delete;

  std::uint16_t port() const { return port_; }
  void stop();

 private:
  void accept_loop();
  void serve(std::shared_ptr<Socket> client);

  Handler handler_;
  Socket listener_;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread acceptor_;
  std::mutex mu_;
  std::vector<std::shared_ptr<Socket>> clients_;
  std::vector<std::thread> workers_;
};

std::int64_t steady_ms();

}  // namespace isoha::net
