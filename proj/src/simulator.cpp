#include "dyattack/simulator.hpp"

#include <sys/socket.h>

#include <condition_variable>
#include <fstream>
#include <set>
#include <sstream>

namespace dyattack {

namespace {

using Clock = std::chrono::steady_clock;
using std::chrono::milliseconds;

std::vector<std::string> words(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

bool parse_switch(const std::string& v, int line) {
  if (v == "on" || v == "true" || v == "yes") return true;
  if (v == "off" || v == "false" || v == "no") return false;
  throw ConfigError("line " + std::to_string(line) + ": expected on/off, got '" + v + "'");
}

std::uint8_t parse_byte(const std::string& v, int line) {
  try {
    std::size_t used = 0;
    unsigned long x = std::stoul(v, &used, 0);
    if (used == v.size() && x <= 0xFF) return static_cast<std::uint8_t>(x);
  } catch (...) {
  }
  throw ConfigError("line " + std::to_string(line) + ": bad alert code '" + v + "'");
}

AgentKind parse_kind(const std::string& k, int line) {
  if (k == "honest") return AgentKind::Honest;
  if (k == "intruder") return AgentKind::Intruder;
  if (k == "external") return AgentKind::External;
  throw ConfigError("line " + std::to_string(line) + ": agent kind must be honest, intruder or external");
}

std::string resolve(const std::string& base, const std::string& p) {
  if (p.empty() || p[0] == '/') return p;
  return base + "/" + p;
}

}  // namespace

bool ErrorPattern::matches(const Bytes& frame) const {
  if (kind == Kind::AlertCode)
    return frame.size() == kHeaderSize + 1 && frame[0] == static_cast<std::uint8_t>(Tag::Alert) && frame[5] == code;
  return frame.size() >= prefix.size() && std::equal(prefix.begin(), prefix.end(), frame.begin());
}

const AgentEntry* EnvironmentConfig::find(std::string_view name) const {
  for (const auto& a : agents)
    if (a.name == name) return &a;
  return nullptr;
}

const AgentEntry& EnvironmentConfig::intruder() const {
  for (const auto& a : agents)
    if (a.kind == AgentKind::Intruder) return a;
  throw ConfigError("no intruder agent");
}

const ErrorPattern* EnvironmentConfig::classify(const Bytes& frame) const {
  for (const auto& p : errors)
    if (p.matches(frame)) return &p;
  return nullptr;
}

EnvironmentConfig parse_environment(std::string_view text, const std::string& base_dir) {
  EnvironmentConfig cfg;
  std::istringstream in{std::string(text)};
  std::string raw, section;
  int line_no = 0;
  auto fail = [&](const std::string& why) { throw ConfigError("line " + std::to_string(line_no) + ": " + why); };
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail("unterminated section header");
      section = line.substr(1, line.size() - 2);
      if (section != "agents" && section != "channels" && section != "errors" && section != "limits")
        fail("unknown section [" + section + "]");
      continue;
    }
    if (section.empty()) fail("entry outside a section");
    if (section == "channels") {
      auto arrow = line.find("->");
      if (arrow == std::string::npos) fail("channel must read 'from -> to'");
      ChannelEntry c{trim(line.substr(0, arrow)), trim(line.substr(arrow + 2))};
      if (c.from.empty() || c.to.empty()) fail("channel must read 'from -> to'");
      cfg.channels.push_back(c);
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected key = value");
    std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (section == "agents") {
      auto w = words(value);
      if (w.empty()) fail("agent " + key + " needs a kind");
      AgentEntry a;
      a.name = key;
      a.kind = parse_kind(w[0], line_no);
      for (std::size_t i = 1; i < w.size(); ++i) {
        auto kv = w[i].find('=');
        if (kv == std::string::npos) fail("expected key=value, got '" + w[i] + "'");
        std::string k = w[i].substr(0, kv), v = w[i].substr(kv + 1);
        if (k == "role") {
          a.role = v;
        } else if (k == "address") {
          try {
            a.address = parse_endpoint(v);
          } catch (const std::exception& e) {
            fail(e.what());
          }
          a.has_address = true;
        } else if (k == "model") {
          a.model = resolve(base_dir, v);
        } else if (k == "allow-renegotiation") {
          a.allow_renegotiation = parse_switch(v, line_no);
        } else if (k.rfind("option.", 0) == 0) {
          a.options[k.substr(7)] = parse_switch(v, line_no);
        } else {
          fail("unknown agent attribute '" + k + "'");
        }
      }
      if (cfg.find(a.name)) fail("agent " + a.name + " declared twice");
      if (a.kind == AgentKind::Honest && a.role.empty()) fail("honest agent " + a.name + " needs role=");
      if (a.kind == AgentKind::External && !a.has_address) fail("external agent " + a.name + " needs address=");
      cfg.agents.push_back(std::move(a));
    } else if (section == "errors") {
      auto w = words(key);
      if (w.size() != 2) fail("expected 'alert 0xNN = text' or 'prefix HEX = text'");
      ErrorPattern p;
      p.description = value;
      if (w[0] == "alert") {
        p.kind = ErrorPattern::Kind::AlertCode;
        p.code = parse_byte(w[1], line_no);
      } else if (w[0] == "prefix") {
        p.kind = ErrorPattern::Kind::BytePrefix;
        try {
          p.prefix = from_hex(w[1]);
        } catch (const CodecError& e) {
          fail(e.what());
        }
      } else {
        fail("error pattern kind must be alert or prefix");
      }
      cfg.errors.push_back(std::move(p));
    } else {
      long ms = 0;
      try {
        ms = std::stol(value);
      } catch (...) {
        fail("expected milliseconds");
      }
      if (ms < 0) fail("negative duration");
      if (key == "step-timeout-ms")
        cfg.step_timeout = milliseconds(ms);
      else if (key == "settle-ms")
        cfg.settle = milliseconds(ms);
      else if (key == "connect-timeout-ms")
        cfg.connect_timeout = milliseconds(ms);
      else
        fail("unknown limit '" + key + "'");
    }
  }

  line_no = 0;
  int intruders = 0;
  std::set<std::pair<std::string, int>> bound;
  for (const auto& a : cfg.agents) {
    if (a.kind == AgentKind::Intruder) ++intruders;
    if (a.has_address && a.address.port != 0 && !bound.insert({a.address.host, a.address.port}).second)
      throw ConfigError("two agents bound to " + a.address.str());
  }
  if (intruders != 1) throw ConfigError("exactly one intruder agent required, found " + std::to_string(intruders));
  const std::string& intr = cfg.intruder().name;
  std::set<std::string> used;
  for (const auto& c : cfg.channels) {
    for (const auto& end : {c.from, c.to})
      if (!cfg.find(end)) throw ConfigError("channel " + c.name() + " names unknown agent " + end);
    if ((c.from == intr) == (c.to == intr)) throw ConfigError("channel " + c.name() + " must have the intruder at one end");
    const std::string& other = c.from == intr ? c.to : c.from;
    if (!used.insert(other).second) throw ConfigError("agent " + other + " is on more than one channel");
  }
  if (cfg.channels.empty()) throw ConfigError("no channels");
  return cfg;
}

EnvironmentConfig load_environment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  auto slash = path.rfind('/');
  return parse_environment(ss.str(), slash == std::string::npos ? "." : path.substr(0, slash));
}

void check_trace_agents(const EnvironmentConfig& cfg, const AttackTrace& trace) {
  for (const auto& st : trace.steps)
    for (const auto& who : {st.sender, st.receiver})
      if (!cfg.find(who.name())) throw ConfigError("trace agent " + who.name() + " has no entry in [agents]");
  if (cfg.intruder().name != trace.intruder)
    throw ConfigError("trace intruder " + trace.intruder + " is not the configured intruder " + cfg.intruder().name);
}

// ---------------------------------------------------------------------------

std::string_view event_class_name(EventClass c) {
  switch (c) {
    case EventClass::Normal: return "normal";
    case EventClass::Error: return "error";
    case EventClass::Finish: return "finish";
  }
  return "?";
}

TrafficLog& TrafficLog::operator=(const TrafficLog& o) {
  if (this != &o) {
    auto ev = o.events();
    std::lock_guard lk(mu_);
    events_ = std::move(ev);
    sealed_ = o.sealed_;
  }
  return *this;
}

void TrafficLog::append(std::string channel, std::string dir, Bytes bytes, EventClass cls) {
  std::lock_guard lk(mu_);
  if (sealed_) throw std::logic_error("traffic log is sealed");
  LogEvent e;
  e.seq = events_.size() + 1;
  e.channel = std::move(channel);
  e.dir = std::move(dir);
  e.bytes = std::move(bytes);
  e.at = Clock::now();
  e.cls = cls;
  events_.push_back(std::move(e));
}

std::vector<LogEvent> TrafficLog::events() const {
  std::lock_guard lk(mu_);
  return events_;
}

std::string TrafficLog::export_text() const {
  std::string out;
  for (const auto& e : events())
    out += std::to_string(e.seq) + "|" + e.channel + "|" + e.dir + "|" + to_hex(e.bytes) + "|" +
           std::string(event_class_name(e.cls)) + "\n";
  return out;
}

TrafficLog TrafficLog::parse(std::string_view text) {
  TrafficLog log;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto f = split_top_level(line, '|');
    if (f.size() != 5) throw ConfigError("log line must have 5 fields: " + line);
    EventClass c = f[4] == "error" ? EventClass::Error : f[4] == "finish" ? EventClass::Finish : EventClass::Normal;
    log.append(f[1], f[2], from_hex(f[3]), c);
  }
  log.seal();
  return log;
}

std::string_view verdict_name(Verdict v) {
  switch (v) {
    case Verdict::Confirmed: return "confirmed";
    case Verdict::Rejected: return "rejected";
    case Verdict::Inconclusive: return "inconclusive";
  }
  return "?";
}

Validation validate(const TrafficLog& log, const EnvironmentConfig& cfg) {
  Validation v;
  bool finished = false;
  for (const auto& e : log.events()) {
    if (e.dir == "in" || e.dir == "blocked") {
      if (const auto* p = cfg.classify(e.bytes)) {
        v.verdict = Verdict::Rejected;
        v.pattern = p->description;
        return v;
      }
    }
    if (e.cls == EventClass::Finish) finished = true;
  }
  v.verdict = finished ? Verdict::Confirmed : Verdict::Inconclusive;
  return v;
}

// ---------------------------------------------------------------------------

namespace {

class Agent : public AgentHandle {
 public:
  Agent(const AgentEntry& entry, const ProtocolModel& m, const AgentSetup& setup)
      : entry_(entry), model_(m), setup_(setup) {
    role_ = model_.find_role(entry.role);
    if (!role_) throw ConfigError("model " + model_.name + " has no role " + entry.role);
    if (entry.allow_renegotiation && entry.role != "server")
      throw ConfigError("allow-renegotiation applies to the server role only");
    if (setup_.connect) {
      status_.state = "connecting";
      endpoint_ = *setup_.connect;
    } else {
      listener_.emplace(entry.address);
      endpoint_ = listener_->endpoint();
      status_.state = "listening";
    }
    thread_ = std::thread([this] { main(); });
  }
  ~Agent() override { stop(); }

  AgentStatus status() const override {
    std::lock_guard lk(mu_);
    return status_;
  }

  bool wait(milliseconds timeout) const override {
    std::unique_lock lk(mu_);
    return cv_.wait_for(lk, timeout, [&] { return done_; });
  }

  void stop() override {
    {
      std::lock_guard lk(mu_);
      stopping_ = true;
      if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
    }
    if (thread_.joinable()) thread_.join();
  }

  const Endpoint& endpoint() const override { return endpoint_; }

 private:
  void set_state(std::string s) {
    std::lock_guard lk(mu_);
    status_.state = std::move(s);
  }

  bool stopping() const {
    std::lock_guard lk(mu_);
    return stopping_;
  }

  void main() {
    try {
      std::optional<Socket> sock;
      if (setup_.connect) {
        sock = connect_to(*setup_.connect, setup_.step_timeout);
      } else {
        auto deadline = Clock::now() + setup_.accept_timeout;
        while (!sock && !stopping() && Clock::now() < deadline) sock = listener_->accept(milliseconds(20));
        listener_->close();
        if (!sock) {
          finish(stopping() ? "stopped" : "timeout", {});
          return;
        }
      }
      {
        std::lock_guard lk(mu_);
        if (stopping_) {
          done_locked("stopped");
          return;
        }
        fd_ = sock->fd();
        status_.state = "running";
      }
      RoleResult r;
      {
        SocketTransport net(std::move(*sock));
        auto suite = make_suite(setup_.suite, setup_.seed, entry_.name);
        RoleOptions o;
        o.options = entry_.options;
        o.self_start = setup_.connect.has_value();
        o.step_timeout = setup_.step_timeout;
        o.on_progress = [this](const RoleState& st) {
          std::lock_guard lk(mu_);
          status_.pc = st.pc;
        };
        r = entry_.allow_renegotiation ? run_tls_server(model_, *entry_.allow_renegotiation, net, *suite, o)
                                       : run_role(model_, *role_, net, *suite, o);
        std::lock_guard lk(mu_);
        fd_ = -1;
      }
      std::lock_guard lk(mu_);
      status_.result = r;
      done_locked(stopping_ ? "stopped" : std::string(role_status_name(r.status)));
    } catch (const std::exception& e) {
      RoleResult r;
      r.detail = e.what();
      finish("failed", r);
    }
  }

  void finish(std::string state, RoleResult r) {
    std::lock_guard lk(mu_);
    status_.result = std::move(r);
    done_locked(std::move(state));
  }

  void done_locked(std::string state) {
    status_.state = std::move(state);
    done_ = true;
    cv_.notify_all();
  }

  AgentEntry entry_;
  ProtocolModel model_;
  AgentSetup setup_;
  const Role* role_ = nullptr;
  std::optional<Listener> listener_;
  Endpoint endpoint_;
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  AgentStatus status_;
  bool stopping_ = false;
  bool done_ = false;
  int fd_ = -1;
  std::thread thread_;
};

}  // namespace

std::unique_ptr<AgentHandle> spawn_agent(const AgentEntry& entry, const ProtocolModel& m, const AgentSetup& setup) {
  return std::make_unique<Agent>(entry, m, setup);
}

// ---------------------------------------------------------------------------

Simulator::Simulator(EnvironmentConfig cfg, std::map<std::string, ProtocolModel> models, std::string suite,
                     std::uint64_t seed)
    : cfg_(std::move(cfg)), models_(std::move(models)), suite_(std::move(suite)), seed_(seed) {}

Simulator::~Simulator() { close(); }

void Simulator::open_channels() {
  const auto& intr = cfg_.intruder();
  auto setup_for = [&](std::optional<Endpoint> connect) {
    AgentSetup s;
    s.suite = suite_;
    s.seed = seed_;
    s.step_timeout = cfg_.step_timeout;
    s.accept_timeout = cfg_.connect_timeout + cfg_.step_timeout;
    s.connect = std::move(connect);
    return s;
  };
  auto model_for = [&](const AgentEntry& a) -> const ProtocolModel& {
    auto it = models_.find(a.name);
    if (it == models_.end()) throw ConfigError("no model for honest agent " + a.name);
    return it->second;
  };

  // targets first, so they are listening before any initiator speaks
  for (const auto& c : cfg_.channels) {
    if (c.from != intr.name) continue;
    const AgentEntry& to = *cfg_.find(c.to);
    Endpoint at = to.address;
    if (to.kind == AgentKind::Honest) {
      auto h = spawn_agent(to, model_for(to), setup_for(std::nullopt));
      at = h->endpoint();
      agents_[to.name] = std::move(h);
    }
    channels_[c.name()] = Channel{c, connect_to(at, cfg_.connect_timeout), false};
  }
  for (const auto& c : cfg_.channels) {
    if (c.to != intr.name) continue;
    const AgentEntry& from = *cfg_.find(c.from);
    Listener l(intr.address);
    if (from.kind == AgentKind::Honest) agents_[from.name] = spawn_agent(from, model_for(from), setup_for(l.endpoint()));
    auto s = l.accept(cfg_.connect_timeout);
    if (!s) throw std::runtime_error("agent " + from.name + " did not connect to " + l.endpoint().str());
    channels_[c.name()] = Channel{c, std::move(*s), false};
  }
}

std::vector<std::string> Simulator::channel_names() const {
  std::vector<std::string> out;
  for (const auto& c : cfg_.channels) out.push_back(c.name());
  return out;
}

bool Simulator::has_channel(const std::string& ch) const { return channels_.count(ch) > 0; }

Simulator::Channel& Simulator::channel(const std::string& ch) {
  auto it = channels_.find(ch);
  if (it == channels_.end()) throw std::invalid_argument("no open channel " + ch);
  if (it->second.closed) throw ChannelClosed("channel " + ch + " is closed");
  return it->second;
}

void Simulator::log_inbound(const std::string& ch, const Bytes& frame, const char* dir) {
  log_.append(ch, dir, frame, cfg_.classify(frame) ? EventClass::Error : EventClass::Normal);
}

void Simulator::send(const std::string& ch, const Bytes& frame) {
  auto& c = channel(ch);
  try {
    c.sock.write_frame(frame);
  } catch (const ChannelClosed&) {
    c.closed = true;
    throw;
  }
  log_.append(ch, "out", frame, EventClass::Normal);
}

std::optional<Bytes> Simulator::intercept(const std::string& ch, milliseconds timeout) {
  auto& c = channel(ch);
  std::optional<Bytes> f;
  try {
    f = c.sock.read_frame(timeout);
  } catch (const ChannelClosed&) {
    c.closed = true;
    throw;
  }
  if (f) log_inbound(ch, *f, "in");
  return f;
}

int Simulator::block(const std::string& ch, int count, milliseconds timeout) {
  auto& c = channel(ch);
  int n = 0;
  for (; n < count; ++n) {
    std::optional<Bytes> f;
    try {
      f = c.sock.read_frame(timeout);
    } catch (const ChannelClosed&) {
      c.closed = true;
      break;
    }
    if (!f) break;
    log_inbound(ch, *f, "blocked");
  }
  return n;
}

int Simulator::redirect(const std::string& from, const std::string& to, int count, milliseconds timeout) {
  int n = 0;
  for (; n < count; ++n) {
    auto f = intercept(from, timeout);
    if (!f) break;
    send(to, *f);
  }
  return n;
}

void Simulator::settle(milliseconds window) {
  auto deadline = Clock::now() + window;
  for (;;) {
    bool any_open = false;
    for (const auto& name : channel_names()) {
      auto it = channels_.find(name);
      if (it == channels_.end() || it->second.closed) continue;
      any_open = true;
      try {
        if (auto f = it->second.sock.read_frame(milliseconds(10))) log_inbound(name, *f, "in");
      } catch (const ChannelClosed&) {
        it->second.closed = true;
      } catch (const CodecError&) {
        it->second.closed = true;
      }
    }
    if (!any_open || Clock::now() >= deadline) break;
  }
}

void Simulator::finish_event() { log_.append("engine", "internal", {}, EventClass::Finish); }

void Simulator::close() {
  for (auto& [name, c] : channels_) {
    c.sock.close();
    c.closed = true;
  }
  for (auto& [name, a] : agents_) {
    a->wait(milliseconds(500));
    a->stop();
  }
}

std::map<std::string, AgentStatus> Simulator::agent_statuses() const {
  std::map<std::string, AgentStatus> out;
  for (const auto& [name, a] : agents_) out[name] = a->status();
  return out;
}

const AgentHandle* Simulator::agent(const std::string& name) const {
  auto it = agents_.find(name);
  return it == agents_.end() ? nullptr : it->second.get();
}

// ---------------------------------------------------------------------------

RunReport run_attack(const EnvironmentConfig& cfg, const Scenario& s, const RunOptions& opts) {
  RunReport rep;
  rep.execution.status = ExecStatus::Aborted;
  try {
    std::map<std::string, ProtocolModel> models;
    for (const auto& a : cfg.agents) {
      if (a.kind != AgentKind::Honest) continue;
      if (opts.model)
        models.emplace(a.name, *opts.model);
      else if (!a.model.empty())
        models.emplace(a.name, load_model(a.model));
    }
    Simulator sim(cfg, std::move(models), opts.suite, opts.seed);
    try {
      sim.open_channels();
      auto suite = make_suite(opts.suite, opts.seed, cfg.intruder().name);
      Encoder enc(*suite);
      ChannelTransport net(sim, cfg.channels.front().name());
      ExecutionOptions eo;
      eo.step_timeout = cfg.step_timeout;
      eo.classify_error = [&cfg](const Bytes& f) -> std::optional<std::string> {
        if (const auto* p = cfg.classify(f)) return p->description;
        return std::nullopt;
      };
      rep.execution = execute(s, enc, net, eo);
      sim.settle(cfg.settle);
      if (rep.execution.status == ExecStatus::Finished) sim.finish_event();
    } catch (const std::exception& e) {
      rep.error = e.what();
    }
    sim.close();
    rep.log = sim.log();
    rep.agents = sim.agent_statuses();
  } catch (const std::exception& e) {
    rep.error = e.what();
  }
  rep.log.seal();
  rep.validation = validate(rep.log, cfg);
  return rep;
}

}  // namespace dyattack
