#pragma once

// Reference system under test: interprets one role of a (possibly mutated) model over the
// wire codec.

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <string>

#include "dyattack/crypto.hpp"
#include "dyattack/engine.hpp"
#include "dyattack/model.hpp"

namespace dyattack {

namespace alert {
constexpr std::uint8_t kDecode = 0x01;
constexpr std::uint8_t kUnexpected = 0x0A;  // frame shape does not fit the pattern
constexpr std::uint8_t kCheckFailed = 0x28;
constexpr std::uint8_t kNoRenegotiation = 0x64;
}  // namespace alert

enum class RoleStatus { Completed, ProtocolError, Timeout, Closed };
std::string_view role_status_name(RoleStatus s);

struct RoleState {
  std::string role;
  /// Variables (atoms, inverse keys, knowledge terms) to their bytes. Only grows; a primed
  /// variable rebinds.
  std::map<Term, Bytes> bindings;
  /// Every subterm built or matched so far, latest value.
  std::map<Term, Bytes> values;
  /// Transition about to run (1-based); advances by one per transition passed.
  int pc = 1;
};

struct RoleResult {
  RoleStatus status = RoleStatus::Completed;
  /// Alert sent (ours) or received (peer's) when status is ProtocolError.
  std::uint8_t alert = 0;
  bool alert_from_peer = false;
  /// Transition where the run stopped, or the last one for Completed.
  int transition = 0;
  std::string detail;
};

struct RoleOptions {
  /// Overrides for the model's `option` defaults.
  std::map<std::string, bool> options;
  /// Skip a leading RCV(start): the role opens the session itself.
  bool self_start = false;
  std::chrono::milliseconds step_timeout{5000};
  /// Called after every transition; used for status probes.
  std::function<void(const RoleState&)> on_progress;
};

RoleState initial_state(const Role& role, CryptoSuite& suite);

RoleResult run_role(const ProtocolModel& m, const Role& role, Transport& net, CryptoSuite& suite,
                    const RoleOptions& opts = {}, RoleState* state = nullptr);

/// The `server` role of a TLS model followed by renegotiation handling: a hello-shaped
/// message encrypted under the client's session key is answered with a new ServerHello
/// under the server key when allowed, with ALERT 0x64 otherwise.
RoleResult run_tls_server(const ProtocolModel& m, bool allow_renegotiation, Transport& net, CryptoSuite& suite,
                          const RoleOptions& opts = {}, RoleState* state = nullptr);

/// The honest frame with the value at `pos` of `pattern` replaced by a foreign one of the
/// same kind. Needs a transparent frame.
Bytes make_probe(const Bytes& honest_frame, const Term& pattern, const Position& pos, MutationKind kind);

/// Effective option values: model defaults overridden by `overrides`.
std::map<std::string, bool> effective_options(const ProtocolModel& m, const std::map<std::string, bool>& overrides);

}  // namespace dyattack
