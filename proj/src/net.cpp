#include "isoha/net.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace isoha::net {

namespace {

std::string errno_text(const std::string& what) { return what + ": " + std::strerror(errno); }

sockaddr_in resolve(const Endpoint& ep) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(ep.port);
  const std::string host = ep.host.empty() || ep.host == "localhost" ? "127.0.0.1" : ep.host;
  if (host == "0.0.0.0" || host == "*") {
    addr.sin_addr.s_addr = htonl(INADDR_ANY);
    return addr;
  }
  if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) == 1) return addr;

  addrinfo hints{};
  hints.ai_family = AF_INET;
  addrinfo* res = nullptr;
  if (getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || !res) {
    throw NetError("cannot resolve host " + host);
  }
  addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  freeaddrinfo(res);
  return addr;
}

bool wait_fd(int fd, short events, std::optional<Millis> timeout) {
  pollfd p{fd, events, 0};
  const int ms = timeout ? static_cast<int>(std::max<std::int64_t>(0, timeout->count())) : -1;
  for (;;) {
    int rc = ::poll(&p, 1, ms);
    if (rc < 0 && errno == EINTR) continue;
    if (rc < 0) throw NetError(errno_text("poll"));
    return rc > 0;
  }
}

}  // namespace

std::int64_t steady_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(steady_clock::now().time_since_epoch()).count();
}

Endpoint Endpoint::parse(std::string_view text) {
  auto colon = text.rfind(':');
  if (colon == std::string_view::npos) throw NetError("endpoint needs host:port, got '" + std::string(text) + "'");
  Endpoint ep;
  if (colon > 0) ep.host = std::string(text.substr(0, colon));
  const std::string port(text.substr(colon + 1));
  if (port.empty() || port.size() > 5 || port.find_first_not_of("0123456789") != std::string::npos) {
    throw NetError("bad port in endpoint '" + std::string(text) + "'");
  }
  const unsigned long p = std::stoul(port);
  if (p > 65535) throw NetError("port out of range in '" + std::string(text) + "'");
  ep.port = static_cast<std::uint16_t>(p);
  return ep;
}

std::string Endpoint::str() const { return host + ":" + std::to_string(port); }

// ---------------------------------------------------------------------------
// Socket

Socket::~Socket() { close(); }

Socket& Socket::operator=(Socket&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = other.release();
  }
  return *this;
}

int Socket::release() {
  int fd = fd_;
  fd_ = -1;
  return fd;
}

void Socket::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

void Socket::shutdown() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

Socket Socket::connect(const Endpoint& ep, Millis timeout) {
  sockaddr_in addr = resolve(ep);
  Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!s.valid()) throw NetError(errno_text("socket"));

  const int flags = ::fcntl(s.fd(), F_GETFL, 0);
  ::fcntl(s.fd(), F_SETFL, flags | O_NONBLOCK);
  int rc = ::connect(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr);
  if (rc < 0 && errno != EINPROGRESS) {
    if (errno == ECONNREFUSED) throw ConnectRefused("connection refused by " + ep.str());
    throw NetError(errno_text("connect " + ep.str()));
  }
  if (rc < 0) {
    if (!wait_fd(s.fd(), POLLOUT, timeout)) throw NetError("connect timeout to " + ep.str());
    int err = 0;
    socklen_t len = sizeof err;
    ::getsockopt(s.fd(), SOL_SOCKET, SO_ERROR, &err, &len);
    if (err == ECONNREFUSED) throw ConnectRefused("connection refused by " + ep.str());
    if (err != 0) throw NetError("connect " + ep.str() + ": " + std::strerror(err));
  }
  ::fcntl(s.fd(), F_SETFL, flags);
  int one = 1;
  ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return s;
}

Socket Socket::listen(const Endpoint& ep, int backlog) {
  sockaddr_in addr = resolve(ep);
  Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!s.valid()) throw NetError(errno_text("socket"));
  int one = 1;
  ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
    throw NetError(errno_text("bind " + ep.str()));
  }
  if (::listen(s.fd(), backlog) < 0) throw NetError(errno_text("listen " + ep.str()));
  return s;
}

std::uint16_t Socket::local_port() const {
  sockaddr_in addr{};
  socklen_t len = sizeof addr;
  if (::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len) < 0) {
    throw NetError(errno_text("getsockname"));
  }
  return ntohs(addr.sin_port);
}

Socket Socket::accept() {
  for (;;) {
    int fd = ::accept4(fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd >= 0) {
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      return Socket(fd);
    }
    if (errno == EINTR || errno == ECONNABORTED) continue;
    return Socket();
  }
}

void Socket::send_all(std::string_view data) {
  while (!data.empty()) {
    ssize_t n = ::send(fd_, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw NetError(errno_text("send"));
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

std::optional<std::size_t> Socket::recv_some(char* buf, std::size_t len, std::optional<Millis> timeout) {
  if (timeout && !wait_fd(fd_, POLLIN, timeout)) return std::nullopt;
  for (;;) {
    ssize_t n = ::recv(fd_, buf, len, 0);
    if (n >= 0) return static_cast<std::size_t>(n);
    if (errno == EINTR) continue;
    if (errno == ECONNRESET) return 0;
    throw NetError(errno_text("recv"));
  }
}

// ---------------------------------------------------------------------------
// FramedConnection

FramedConnection::FramedConnection(Socket sock, framing::FramerConfig config)
    : sock_(std::move(sock)), buffer_(config), config_(config) {}

void FramedConnection::send(std::string_view payload) {
  sock_.send_all(framing::encode_frame(payload, config_));
}

std::optional<std::string> FramedConnection::receive(std::optional<Millis> timeout) {
  const std::int64_t deadline = timeout ? steady_ms() + timeout->count() : 0;
  char buf[4096];
  for (;;) {
    if (next_ < ready_.size()) return std::move(ready_[next_++]);
    ready_.clear();
    next_ = 0;

    std::optional<Millis> left;
    if (timeout) {
      left = Millis(deadline - steady_ms());
      if (left->count() <= 0) return std::nullopt;
    }
    auto n = sock_.recv_some(buf, sizeof buf, left);
    if (!n) return std::nullopt;
    if (*n == 0) throw NetError("connection closed by peer");
    try {
      ready_ = buffer_.push({buf, *n});
    } catch (const framing::FramingError& e) {
      throw NetError(std::string("framing: ") + e.what());
    }
  }
}

std::string line_request(const Endpoint& ep, std::string_view line, Millis timeout) {
  Socket s = Socket::connect(ep, timeout);
  std::string out(line);
  out.push_back('\n');
  s.send_all(out);
  std::string reply;
  const std::int64_t deadline = steady_ms() + timeout.count();
  char buf[1024];
  while (reply.find('\n') == std::string::npos) {
    auto left = Millis(deadline - steady_ms());
    if (left.count() <= 0) throw NetError("timeout waiting for reply from " + ep.str());
    auto n = s.recv_some(buf, sizeof buf, left);
    if (!n) throw NetError("timeout waiting for reply from " + ep.str());
    if (*n == 0) break;
    reply.append(buf, *n);
  }
  if (auto nl = reply.find('\n'); nl != std::string::npos) reply.resize(nl);
  if (!reply.empty() && reply.back() == '\r') reply.pop_back();
  return reply;
}

// ---------------------------------------------------------------------------
// LineServer

LineServer::LineServer(Endpoint ep, Handler handler)
    : handler_(std::move(handler)), listener_(Socket::listen(ep)) {
  port_ = listener_.local_port();
  acceptor_ = std::thread([this] { accept_loop(); });
}

LineServer::~LineServer() { stop(); }

void LineServer::stop() {
  if (stopping_.exchange(true)) return;
  listener_.shutdown();
  if (acceptor_.joinable()) acceptor_.join();
  std::vector<std::thread> workers;
  {
    std::lock_guard lock(mu_);
    for (auto& c : clients_) c->shutdown();
    workers.swap(workers_);
  }
  for (auto& t : workers) t.join();
  listener_.close();
}

void LineServer::accept_loop() {
  while (!stopping_) {
    Socket s = listener_.accept();
    if (!s.valid()) break;
    auto client = std::make_shared<Socket>(std::move(s));
    std::lock_guard lock(mu_);
    if (stopping_) break;
    clients_.push_back(client);
    workers_.emplace_back([this, client] { serve(client); });
  }
}

void LineServer::serve(std::shared_ptr<Socket> client) {
  std::string pending;
  char buf[1024];
  try {
    for (;;) {
      auto n = client->recv_some(buf, sizeof buf, std::nullopt);
      if (!n || *n == 0) break;
      pending.append(buf, *n);
      std::size_t nl;
      while ((nl = pending.find('\n')) != std::string::npos) {
        std::string line = pending.substr(0, nl);
        pending.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::string reply = handler_(line);
        reply.push_back('\n');
        client->send_all(reply);
      }
      if (pending.size() > 4096) break;
    }
  } catch (const NetError&) {
  }
  std::lock_guard lock(mu_);
  std::erase(clients_, client);
  client->close();
}

}  // namespace isoha::net
