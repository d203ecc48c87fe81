#pragma once

// In-memory transports for driving the engine without sockets.

#include <deque>
#include <map>

#include "dyattack/engine.hpp"

namespace scripted {

using namespace dyattack;

/// Hands out queued frames; an empty queue times out.
class QueueTransport : public Transport {
 public:
  explicit QueueTransport(std::deque<Bytes> inbound) : inbound_(std::move(inbound)) {}
  void send(const Bytes& frame) override { sent.push_back(frame); }
  std::optional<Bytes> receive(std::chrono::milliseconds) override {
    if (inbound_.empty()) return std::nullopt;
    Bytes b = std::move(inbound_.front());
    inbound_.pop_front();
    return b;
  }
  std::vector<Bytes> sent;

 private:
  std::deque<Bytes> inbound_;
};

/// Answers each receive step with the encoding of the value the symbolic run assigns to
/// that step's slot.
class EchoTransport : public Transport {
 public:
  EchoTransport(const Scenario& s, const std::map<int, Term>& sym, Encoder& enc) : enc_(enc) {
    for (const auto& st : s.steps)
      if (st.action == ActionKind::Receive) pending_.push_back(sym.at(st.index));
  }
  void send(const Bytes& frame) override { sent.push_back(frame); }
  std::optional<Bytes> receive(std::chrono::milliseconds) override {
    if (pending_.empty()) return std::nullopt;
    Term t = pending_.front();
    pending_.pop_front();
    return enc_.encode(t);
  }
  std::vector<Bytes> sent;

 private:
  Encoder& enc_;
  std::deque<Term> pending_;
};

}  // namespace scripted
