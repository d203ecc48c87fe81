#pragma once

// The platform side of an attack run: channels to the system under test, honest agents,
// the traffic log and the verdict.

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "dyattack/honest.hpp"
#include "dyattack/net.hpp"
#include "dyattack/scenario.hpp"
#include "dyattack/trace.hpp"

namespace dyattack {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ErrorPattern {
  enum class Kind { AlertCode, BytePrefix };
  Kind kind = Kind::AlertCode;
  std::uint8_t code = 0;
  Bytes prefix;
  std::string description;
  bool matches(const Bytes& frame) const;
};

enum class AgentKind { Honest, Intruder, External };

struct AgentEntry {
  std::string name;
  AgentKind kind = AgentKind::Honest;
  std::string role;
  std::string model;  // path, resolved against the config's directory
  Endpoint address;
  bool has_address = false;
  std::map<std::string, bool> options;
  /// Set for a TLS server agent: whether it accepts renegotiation.
  std::optional<bool> allow_renegotiation;
};

struct ChannelEntry {
  std::string from, to;
  std::string name() const { return from + "-" + to; }
};

struct EnvironmentConfig {
  std::vector<AgentEntry> agents;
  std::vector<ChannelEntry> channels;
  std::vector<ErrorPattern> errors;
  std::chrono::milliseconds step_timeout{2000};
  std::chrono::milliseconds settle{250};
  std::chrono::milliseconds connect_timeout{2000};

  const AgentEntry* find(std::string_view name) const;
  const AgentEntry& intruder() const;
  /// First pattern matching the frame.
  const ErrorPattern* classify(const Bytes& frame) const;
};

/// Sections [agents], [channels], [errors], [limits]; see docs/formats.md.
EnvironmentConfig parse_environment(std::string_view text, const std::string& base_dir = ".");
EnvironmentConfig load_environment(const std::string& path);
/// Every agent of the trace has an entry.
void check_trace_agents(const EnvironmentConfig& cfg, const AttackTrace& trace);

enum class EventClass { Normal, Error, Finish };
std::string_view event_class_name(EventClass c);

struct LogEvent {
  std::uint64_t seq = 0;
  std::string channel;
  std::string dir;  // out, in, blocked, internal
  Bytes bytes;
  std::chrono::steady_clock::time_point at;
  EventClass cls = EventClass::Normal;
};

/// Append-only, thread-safe. Export is `seq|channel|dir|hex|class` per line (no timestamps,
/// so seeded transparent runs export identical logs).
class TrafficLog {
 public:
  TrafficLog() = default;
  TrafficLog(const TrafficLog& o) : events_(o.events()), sealed_(o.sealed_) {}
  TrafficLog& operator=(const TrafficLog& o);

  void append(std::string channel, std::string dir, Bytes bytes, EventClass cls);
  void seal() { sealed_ = true; }
  std::vector<LogEvent> events() const;
  std::string export_text() const;
  static TrafficLog parse(std::string_view text);

 private:
  mutable std::mutex mu_;
  std::vector<LogEvent> events_;
  bool sealed_ = false;
};

enum class Verdict { Confirmed, Rejected, Inconclusive };
std::string_view verdict_name(Verdict v);

struct Validation {
  Verdict verdict = Verdict::Inconclusive;
  std::string pattern;  // the matching error description when rejected
};

/// Re-checks the raw log against the config's error patterns.
Validation validate(const TrafficLog& log, const EnvironmentConfig& cfg);

struct AgentStatus {
  std::string state;  // listening, connecting, running, completed, protocol-error, timeout, closed, stopped, failed
  int pc = 1;
  RoleResult result;
};

/// An honest agent running in a worker thread.
class AgentHandle {
 public:
  virtual ~AgentHandle() = default;
  virtual AgentStatus status() const = 0;
  /// Waits for the role to end, at most `timeout`.
  virtual bool wait(std::chrono::milliseconds timeout) const = 0;
  virtual void stop() = 0;
  virtual const Endpoint& endpoint() const = 0;
};

struct AgentSetup {
  std::string suite = "transparent";
  std::uint64_t seed = 1;
  std::chrono::milliseconds step_timeout{2000};
  std::chrono::milliseconds accept_timeout{10000};
  /// Connect to this endpoint (the agent opens the session) instead of listening.
  std::optional<Endpoint> connect;
};

/// Throws ConfigError for an unknown role, a runtime_error when the address is taken.
std::unique_ptr<AgentHandle> spawn_agent(const AgentEntry& entry, const ProtocolModel& m, const AgentSetup& setup);

/// Intruder-owned channels plus the agents behind them.
class Simulator {
 public:
  /// `models` maps agent name to the model its role comes from (honest agents only).
  Simulator(EnvironmentConfig cfg, std::map<std::string, ProtocolModel> models, std::string suite, std::uint64_t seed);
  ~Simulator();

  void open_channels();
  std::vector<std::string> channel_names() const;
  bool has_channel(const std::string& ch) const;

  void send(const std::string& ch, const Bytes& frame);
  std::optional<Bytes> intercept(const std::string& ch, std::chrono::milliseconds timeout);
  /// Drops up to `count` inbound frames; returns how many arrived.
  int block(const std::string& ch, int count, std::chrono::milliseconds timeout);
  /// Forwards up to `count` frames from one channel to another unmodified.
  int redirect(const std::string& from, const std::string& to, int count, std::chrono::milliseconds timeout);

  /// Logs whatever arrives on any channel within the window.
  void settle(std::chrono::milliseconds window);
  void finish_event();
  void close();

  const TrafficLog& log() const { return log_; }
  std::map<std::string, AgentStatus> agent_statuses() const;
  const AgentHandle* agent(const std::string& name) const;
  const EnvironmentConfig& config() const { return cfg_; }

 private:
  struct Channel {
    ChannelEntry entry;
    Socket sock;
    bool closed = false;
  };
  Channel& channel(const std::string& ch);
  void log_inbound(const std::string& ch, const Bytes& frame, const char* dir);

  EnvironmentConfig cfg_;
  std::map<std::string, ProtocolModel> models_;
  std::string suite_;
  std::uint64_t seed_;
  std::map<std::string, Channel> channels_;
  std::map<std::string, std::unique_ptr<AgentHandle>> agents_;
  TrafficLog log_;
};

/// The engine's view of one simulator channel.
class ChannelTransport : public Transport {
 public:
  ChannelTransport(Simulator& sim, std::string ch) : sim_(sim), ch_(std::move(ch)) {}
  void send(const Bytes& frame) override { sim_.send(ch_, frame); }
  std::optional<Bytes> receive(std::chrono::milliseconds timeout) override { return sim_.intercept(ch_, timeout); }

 private:
  Simulator& sim_;
  std::string ch_;
};

struct RunOptions {
  std::string suite = "transparent";
  std::uint64_t seed = 1;
  /// Replaces every honest agent's configured model.
  std::optional<ProtocolModel> model;
};

struct RunReport {
  Validation validation;
  ExecutionReport execution;
  std::string error;  // infrastructure failure, if any
  TrafficLog log;
  std::map<std::string, AgentStatus> agents;
};

/// Opens the environment, executes the scenario over the intruder's first channel, settles,
/// and validates.
RunReport run_attack(const EnvironmentConfig& cfg, const Scenario& s, const RunOptions& opts);

}  // namespace dyattack
