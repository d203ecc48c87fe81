#include "dyattack/net.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace dyattack {

namespace {

using Clock = std::chrono::steady_clock;

std::runtime_error sys_error(const std::string& what) {
  return std::runtime_error(what + ": " + std::strerror(errno));
}

int remaining_ms(Clock::time_point deadline) {
  auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
  return left < 0 ? 0 : static_cast<int>(left);
}

sockaddr_in to_sockaddr(const Endpoint& e) {
  sockaddr_in sa{};
  sa.sin_family = AF_INET;
  sa.sin_port = htons(e.port);
  if (inet_pton(AF_INET, e.host.c_str(), &sa.sin_addr) != 1)
    throw std::invalid_argument("not an IPv4 address: " + e.host);
  return sa;
}

}  // namespace

Endpoint parse_endpoint(std::string_view s) {
  auto colon = s.rfind(':');
  if (colon == std::string_view::npos) throw std::invalid_argument("expected host:port, got '" + std::string(s) + "'");
  Endpoint e;
  e.host = std::string(s.substr(0, colon));
  if (e.host.empty() || e.host == "localhost") e.host = "127.0.0.1";
  std::string port(s.substr(colon + 1));
  int p = -1;
  try {
    std::size_t used = 0;
    p = std::stoi(port, &used);
    if (used != port.size()) p = -1;
  } catch (...) {
  }
  if (p < 0 || p > 65535) throw std::invalid_argument("bad port '" + port + "'");
  e.port = static_cast<std::uint16_t>(p);
  return e;
}

Socket& Socket::operator=(Socket&& o) noexcept {
  if (this != &o) {
    close();
    fd_ = std::exchange(o.fd_, -1);
    buffer_ = std::move(o.buffer_);
  }
  return *this;
}

void Socket::close() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

void Socket::shutdown_write() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_WR);
}

void Socket::write_frame(const Bytes& frame) {
  std::size_t sent = 0;
  while (sent < frame.size()) {
    ssize_t n = ::send(fd_, frame.data() + sent, frame.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno == EPIPE || errno == ECONNRESET) throw ChannelClosed("peer closed the connection");
      throw sys_error("send");
    }
    sent += static_cast<std::size_t>(n);
  }
}

std::optional<Bytes> Socket::read_frame(std::chrono::milliseconds timeout) {
  auto deadline = Clock::now() + timeout;
  for (;;) {
    // a full header is enough to know the frame size
    if (buffer_.size() >= kHeaderSize) {
      std::size_t len = 0;
      for (int i = 1; i <= 4; ++i) len = (len << 8) | buffer_[i];
      if (len > kMaxPayload) throw CodecError("frame too large: " + std::to_string(len) + " bytes");
      if (!is_known_tag(buffer_[0])) throw CodecError("unknown tag");
      if (buffer_.size() >= kHeaderSize + len) {
        Bytes out(buffer_.begin(), buffer_.begin() + static_cast<long>(kHeaderSize + len));
        buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<long>(kHeaderSize + len));
        return out;
      }
    }
    pollfd p{fd_, POLLIN, 0};
    int r = ::poll(&p, 1, remaining_ms(deadline));
    if (r < 0) {
      if (errno == EINTR) continue;
      throw sys_error("poll");
    }
    if (r == 0) return std::nullopt;
    std::uint8_t chunk[65536];
    ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      if (errno == ECONNRESET) throw ChannelClosed("connection reset");
      throw sys_error("recv");
    }
    if (n == 0) throw ChannelClosed("peer closed the connection");
    buffer_.insert(buffer_.end(), chunk, chunk + n);
  }
}

Listener::Listener(const Endpoint& at) {
  int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
  if (fd < 0) throw sys_error("socket");
  sock_ = Socket(fd);
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  auto sa = to_sockaddr(at);
  if (::bind(fd, reinterpret_cast<sockaddr*>(&sa), sizeof sa) < 0) throw sys_error("bind " + at.str());
  if (::listen(fd, 8) < 0) throw sys_error("listen");
  socklen_t len = sizeof sa;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&sa), &len);
  bound_ = at;
  bound_.port = ntohs(sa.sin_port);
}

std::optional<Socket> Listener::accept(std::chrono::milliseconds timeout) {
  pollfd p{sock_.fd(), POLLIN, 0};
  int r = ::poll(&p, 1, static_cast<int>(timeout.count()));
  if (r <= 0) return std::nullopt;
  int fd = ::accept4(sock_.fd(), nullptr, nullptr, SOCK_CLOEXEC);
  if (fd < 0) return std::nullopt;
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return Socket(fd);
}

Socket connect_to(const Endpoint& to, std::chrono::milliseconds timeout) {
  auto sa = to_sockaddr(to);
  auto deadline = Clock::now() + timeout;
  for (;;) {
    int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (fd < 0) throw sys_error("socket");
    Socket s(fd);
    if (::connect(fd, reinterpret_cast<sockaddr*>(&sa), sizeof sa) == 0) {
      int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      return s;
    }
    if (errno != ECONNREFUSED || Clock::now() >= deadline) throw sys_error("connect " + to.str());
    ::usleep(20000);
  }
}

// ---------------------------------------------------------------------------

namespace {

struct Queue {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<Bytes> frames;
  bool closed = false;
};

class PipeEnd : public Transport {
 public:
  PipeEnd(std::shared_ptr<Queue> in, std::shared_ptr<Queue> out) : in_(std::move(in)), out_(std::move(out)) {}
  ~PipeEnd() override {
    std::lock_guard lk(out_->mu);
    out_->closed = true;
    out_->cv.notify_all();
  }
  void send(const Bytes& frame) override {
    std::lock_guard lk(out_->mu);
    out_->frames.push_back(frame);
    out_->cv.notify_all();
  }
  std::optional<Bytes> receive(std::chrono::milliseconds timeout) override {
    std::unique_lock lk(in_->mu);
    if (!in_->cv.wait_for(lk, timeout, [&] { return !in_->frames.empty() || in_->closed; })) return std::nullopt;
    if (in_->frames.empty()) throw ChannelClosed("peer closed the pipe");
    Bytes b = std::move(in_->frames.front());
    in_->frames.pop_front();
    return b;
  }

 private:
  std::shared_ptr<Queue> in_, out_;
};

}  // namespace

std::pair<std::unique_ptr<Transport>, std::unique_ptr<Transport>> make_pipe() {
  auto ab = std::make_shared<Queue>(), ba = std::make_shared<Queue>();
  return {std::make_unique<PipeEnd>(ba, ab), std::make_unique<PipeEnd>(ab, ba)};
}

}  // namespace dyattack
