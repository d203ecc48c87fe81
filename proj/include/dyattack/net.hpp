#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

#include "dyattack/codec.hpp"
#include "dyattack/engine.hpp"

namespace dyattack {

class ChannelClosed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
  std::string str() const { return host + ":" + std::to_string(port); }
};

/// `host:port`, port may be 0.
Endpoint parse_endpoint(std::string_view s);

/// Owning TCP socket.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Socket& operator=(Socket&& o) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  ~Socket() { close(); }

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  void close();
  /// Stops further sends; the peer sees end of stream.
  void shutdown_write();

  void write_frame(const Bytes& frame);
  /// Next complete frame; nullopt on deadline. Throws ChannelClosed at end of stream and
  /// CodecError on malformed headers.
  std::optional<Bytes> read_frame(std::chrono::milliseconds timeout);

 private:
  int fd_ = -1;
  Bytes buffer_;
};

class Listener {
 public:
  explicit Listener(const Endpoint& at);
  const Endpoint& endpoint() const { return bound_; }
  std::optional<Socket> accept(std::chrono::milliseconds timeout);
  void close() { sock_.close(); }

 private:
  Socket sock_;
  Endpoint bound_;
};

Socket connect_to(const Endpoint& to, std::chrono::milliseconds timeout);

/// Transport over a connected socket.
class SocketTransport : public Transport {
 public:
  explicit SocketTransport(Socket s) : sock_(std::move(s)) {}
  void send(const Bytes& frame) override { sock_.write_frame(frame); }
  std::optional<Bytes> receive(std::chrono::milliseconds timeout) override { return sock_.read_frame(timeout); }
  Socket& socket() { return sock_; }

 private:
  Socket sock_;
};

/// In-memory duplex channel: two Transports wired back to back.
std::pair<std::unique_ptr<Transport>, std::unique_ptr<Transport>> make_pipe();

}  // namespace dyattack
