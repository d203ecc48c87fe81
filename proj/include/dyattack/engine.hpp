#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dyattack/codec.hpp"
#include "dyattack/crypto.hpp"
#include "dyattack/scenario.hpp"
#include "dyattack/term.hpp"

namespace dyattack {

/// Term -> frame. Non-nonce atoms are NAME frames, `inv(k)` is NAME "inv(k)", nonce atoms
/// and fresh values get a suite nonce on first use and keep it.
class Encoder {
 public:
  explicit Encoder(CryptoSuite& suite) : suite_(suite) {}
  Bytes encode(const Term& t);
  void bind(const Term& atom, Bytes value) { nonces_[atom] = std::move(value); }
  const Bytes* lookup(const Term& atom) const;
  CryptoSuite& suite() { return suite_; }

 private:
  CryptoSuite& suite_;
  std::map<Term, Bytes> nonces_;
};

/// Applies a composition or decomposition recipe to concrete frames. Throws CryptoError or
/// CodecError when the frames do not have the expected shape.
Bytes primitive(const Recipe& r, const std::vector<Bytes>& args, CryptoSuite& suite);

/// Write-once indexed store. Rewriting a slot compares instead.
class DataStore {
 public:
  /// False when the slot already holds different bytes.
  bool write(int index, const Bytes& value);
  const Bytes& read(int index) const;
  bool has(int index) const { return slots_.count(index) > 0; }
  const std::map<int, Bytes>& slots() const { return slots_; }

 private:
  std::map<int, Bytes> slots_;
};

/// The engine's view of the network: one channel to the target.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual void send(const Bytes& frame) = 0;
  /// Next inbound frame, or nullopt when the deadline passes. Throws std::runtime_error
  /// when the peer has gone away.
  virtual std::optional<Bytes> receive(std::chrono::milliseconds timeout) = 0;
};

struct Counters {
  int send_fetches = 0;
  int receive_stores = 0;
  int primitive_calls = 0;
  int finishes = 0;
};

enum class ExecStatus { Finished, Rejected, Mismatch, Timeout, Aborted };
std::string_view exec_status_name(ExecStatus s);

struct ExecutionReport {
  ExecStatus status = ExecStatus::Aborted;
  int step = -1;
  int index = -1;
  std::string reason;
  Counters counters;
};

struct ExecutionOptions {
  std::chrono::milliseconds step_timeout{5000};
  /// Names the error a received frame signals, if any. Default: every ALERT frame.
  std::function<std::optional<std::string>(const Bytes&)> classify_error;
};

std::optional<std::string> default_error_classifier(const Bytes& frame);

/// Runs a scenario: send(Xi) fetches slot i and transmits it; Xi=receive() stores the next
/// inbound frame in slot i; Xi=operator(...) applies a primitive to stored slots and stores
/// the result (a store into a used slot is a check); finish() ends the run.
ExecutionReport execute(const Scenario& s, Encoder& enc, Transport& net, const ExecutionOptions& opts = {},
                        DataStore* store = nullptr);

}  // namespace dyattack
