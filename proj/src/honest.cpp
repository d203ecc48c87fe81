#include "dyattack/honest.hpp"

#include <deque>
#include <optional>

#include "dyattack/net.hpp"

namespace dyattack {

namespace {

struct AlertRaised {
  std::uint8_t code;
  std::string why;
};

bool has_prefix(const Position& p, const Position& prefix) {
  return p.size() >= prefix.size() && std::equal(prefix.begin(), prefix.end(), p.begin());
}

Position child_pos(Position p, int i) {
  p.push_back(i);
  return p;
}

// Bytes for a knowledge term, computed without restrictions: names for non-nonce atoms
// and inverse keys, fresh draws for nonces.
Bytes encode_given(const Term& t, CryptoSuite& suite, std::map<Term, Bytes>& bound) {
  if (auto it = bound.find(t); it != bound.end()) return it->second;
  switch (t.kind()) {
    case TermKind::Atom:
    case TermKind::Fresh: return t.sort() == Sort::Nonce ? suite.nonce() : name_frame(t.name());
    case TermKind::Inv: return name_frame(render_term(t));
    case TermKind::Pair:
      return make_frame(Tag::Pair, concat(encode_given(t.child(0), suite, bound), encode_given(t.child(1), suite, bound)));
    case TermKind::Crypt: return suite.crypt(encode_given(t.child(0), suite, bound), encode_given(t.child(1), suite, bound));
    case TermKind::SCrypt: return suite.scrypt(encode_given(t.child(0), suite, bound), encode_given(t.child(1), suite, bound));
    case TermKind::Hash: return suite.hash(encode_given(t.child(0), suite, bound));
    case TermKind::Apply: {
      std::vector<Bytes> args;
      for (const auto& k : t.children()) args.push_back(encode_given(k, suite, bound));
      return suite.apply(t.name(), args);
    }
  }
  throw std::logic_error("unhandled term kind");
}

class Runner {
 public:
  Runner(const ProtocolModel& m, const Role& role, Transport& net, CryptoSuite& suite, const RoleOptions& opts,
         RoleState& st)
      : role_(role), net_(net), suite_(suite), opts_(opts), st_(st), options_(effective_options(m, opts.options)) {}

  RoleResult run() {
    const auto& trs = role_.transitions;
    for (std::size_t i = 0; i < trs.size(); ++i) {
      const auto& tr = trs[i];
      st_.pc = tr.index;
      if (!active(tr) || (i == 0 && opts_.self_start && is_start_receive(tr))) {
        advance(tr);
        continue;
      }
      try {
        if (tr.direction == Direction::Send) {
          net_.send(build_send(tr.pattern));
        } else {
          auto frame = next_frame(tr, i);
          if (!frame) return result(RoleStatus::Timeout, tr.index, "no message before the deadline");
          if (whole_frame(*frame).tag == Tag::Alert) {
            RoleResult r = result(RoleStatus::ProtocolError, tr.index, "peer sent an alert");
            r.alert = payload_of(*frame).at(0);
            r.alert_from_peer = true;
            return r;
          }
          receive(tr.pattern, *frame);
        }
      } catch (const AlertRaised& a) {
        return raise(a, tr.index);
      } catch (const CodecError& e) {
        return raise({alert::kDecode, e.what()}, tr.index);
      } catch (const ChannelClosed& e) {
        return result(RoleStatus::Closed, tr.index, e.what());
      }
      advance(tr);
    }
    return result(RoleStatus::Completed, trs.empty() ? 0 : trs.back().index, {});
  }

  // Hooks for the TLS renegotiation phase.
  std::optional<Bytes> receive_raw() {
    if (!pending_.empty()) {
      Bytes b = std::move(pending_.front());
      pending_.pop_front();
      return b;
    }
    return net_.receive(opts_.step_timeout);
  }
  Bytes value_of(const Term& t) { return instantiate(t); }
  RoleResult raise(const AlertRaised& a, int transition) {
    try {
      net_.send(alert_frame(a.code));
    } catch (const std::exception&) {
      // the peer is gone; the status still says why we stopped
    }
    RoleResult r = result(RoleStatus::ProtocolError, transition, a.why);
    r.alert = a.code;
    return r;
  }

 private:
  bool active(const Transition& tr) const {
    if (tr.guard.empty()) return true;
    auto it = options_.find(tr.guard);
    return it != options_.end() && it->second;
  }

  static bool is_start_receive(const Transition& tr) {
    return tr.direction == Direction::Receive && tr.pattern.term.kind() == TermKind::Atom &&
           tr.pattern.term.name() == "start";
  }

  void advance(const Transition& tr) {
    st_.pc = tr.index + 1;
    if (opts_.on_progress) opts_.on_progress(st_);
  }

  RoleResult result(RoleStatus s, int transition, std::string detail) const {
    RoleResult r;
    r.status = s;
    r.transition = transition;
    r.detail = std::move(detail);
    return r;
  }

  // Whether the next active transition after `i` is a receive.
  bool next_is_receive(std::size_t i) const {
    for (std::size_t j = i + 1; j < role_.transitions.size(); ++j)
      if (active(role_.transitions[j])) return role_.transitions[j].direction == Direction::Receive;
    return false;
  }

  std::optional<Bytes> next_frame(const Transition& tr, std::size_t i) {
    for (;;) {
      auto frame = receive_raw();
      if (!frame) return frame;
      auto ref = whole_frame(*frame);
      bool first = !seen_any_;
      seen_any_ = true;
      // a session opener aimed at a role that does not wait for one
      if (first && ref.tag == Tag::Name && to_string(payload_of(*frame)) == "start" && !is_start_receive(tr)) continue;
      // one flight carrying two consecutive messages
      if (ref.tag == Tag::Pair && tr.pattern.term.kind() != TermKind::Pair && next_is_receive(i)) {
        auto parts = split_frames(payload_of(*frame));
        if (parts.size() == 2) {
          pending_.push_front(std::move(parts[1]));
          return std::move(parts[0]);
        }
      }
      return frame;
    }
  }

  Bytes instantiate(const Term& t) {
    if (auto it = st_.bindings.find(t); it != st_.bindings.end()) return it->second;
    Bytes b;
    switch (t.kind()) {
      case TermKind::Atom:
      case TermKind::Fresh:
      case TermKind::Inv: throw std::logic_error("role " + role_.name + " has no value for " + render_term(t));
      case TermKind::Pair: b = make_frame(Tag::Pair, concat(instantiate(t.child(0)), instantiate(t.child(1)))); break;
      case TermKind::Crypt: b = suite_.crypt(instantiate(t.child(0)), instantiate(t.child(1))); break;
      case TermKind::SCrypt: b = suite_.scrypt(instantiate(t.child(0)), instantiate(t.child(1))); break;
      case TermKind::Hash: b = suite_.hash(instantiate(t.child(0))); break;
      case TermKind::Apply: {
        std::vector<Bytes> args;
        for (const auto& k : t.children()) args.push_back(instantiate(k));
        b = suite_.apply(t.name(), args);
        break;
      }
    }
    st_.values[t] = b;
    return b;
  }

  Bytes build_send(const Pattern& p) {
    for (const auto& pos : p.primed) {
      const Term& a = term_at(p.term, pos);
      // fresh value; a primed name is the role's own choice of that name
      st_.bindings[a] = a.sort() == Sort::Nonce ? suite_.nonce() : name_frame(a.name());
    }
    Bytes out = instantiate(p.term);
    st_.values[p.term] = out;
    return out;
  }

  void receive(const Pattern& p, const Bytes& frame) {
    decode(frame, suite_.transparent());  // malformed inner frames are a decode error, not a shape error
    primed_ = &p.primed;
    match(p.term, {}, frame);
    primed_ = nullptr;
  }

  bool primed_within(const Position& pos) const {
    for (const auto& q : *primed_)
      if (has_prefix(q, pos)) return true;
    return false;
  }

  bool fully_bound(const Term& t) const {
    if (st_.bindings.count(t)) return true;
    if (t.kind() == TermKind::Atom || t.kind() == TermKind::Fresh || t.kind() == TermKind::Inv) return false;
    for (const auto& k : t.children())
      if (!fully_bound(k)) return false;
    return true;
  }

  // A one-way sub-pattern holding a primed or unknown value cannot be checked.
  bool uncheckable(const Term& t, const Position& pos) const { return primed_within(pos) || !fully_bound(t); }

  static void expect(Tag got, Tag want, const Term& t) {
    if (got != want)
      throw AlertRaised{alert::kUnexpected, std::string("expected ") + std::string(tag_name(want)) + " for " +
                                                render_term(t) + ", got " + std::string(tag_name(got))};
  }

  static AlertRaised check_failed(const Term& t) { return {alert::kCheckFailed, "check failed on " + render_term(t)}; }

  void compare(const Term& t, const Bytes& b) {
    if (instantiate(t) != b) throw check_failed(t);
  }

  Bytes open(const Bytes& key, const Bytes& cipher, const Term& t) {
    try {
      return suite_.decrypt(key, cipher);
    } catch (const CryptoError&) {
      throw check_failed(t);
    }
  }

  void match(const Term& t, const Position& pos, const Bytes& b) {
    Tag tag = whole_frame(b).tag;
    switch (t.kind()) {
      case TermKind::Atom:
      case TermKind::Fresh:
      case TermKind::Inv: {
        expect(tag, t.kind() != TermKind::Inv && t.sort() == Sort::Nonce ? Tag::Bytes : Tag::Name, t);
        if (primed_->count(pos) || !st_.bindings.count(t))
          st_.bindings[t] = b;
        else if (st_.bindings[t] != b)
          throw check_failed(t);
        break;
      }
      case TermKind::Pair: {
        expect(tag, Tag::Pair, t);
        auto parts = split_frames(payload_of(b));
        if (parts.size() != 2) throw AlertRaised{alert::kDecode, "PAIR must hold two frames"};
        match(t.child(0), child_pos(pos, 0), parts[0]);
        match(t.child(1), child_pos(pos, 1), parts[1]);
        break;
      }
      case TermKind::Crypt: {
        const Term& key = t.child(0);
        if (key.kind() == TermKind::Inv) {
          expect(tag, Tag::Sig, t);
          const Term& pub = key.child(0);
          if (uncheckable(pub, child_pos(child_pos(pos, 0), 0))) break;
          match(t.child(1), child_pos(pos, 1), open(instantiate(pub), b, t));
        } else {
          expect(tag, Tag::ACrypt, t);
          Term priv = Term::inv(key);
          if (!primed_within(child_pos(pos, 0)) && st_.bindings.count(key) && st_.bindings.count(priv)) {
            match(t.child(1), child_pos(pos, 1), open(st_.bindings[priv], b, t));
          } else if (!uncheckable(t, pos)) {
            compare(t, b);
          }
        }
        break;
      }
      case TermKind::SCrypt: {
        expect(tag, Tag::SCrypt, t);
        if (uncheckable(t.child(0), child_pos(pos, 0))) break;
        match(t.child(1), child_pos(pos, 1), open(instantiate(t.child(0)), b, t));
        break;
      }
      case TermKind::Hash:
      case TermKind::Apply: {
        expect(tag, t.kind() == TermKind::Hash ? Tag::Hash : Tag::Apply, t);
        if (!uncheckable(t, pos)) compare(t, b);
        break;
      }
    }
    st_.values[t] = b;
  }

  const Role& role_;
  Transport& net_;
  CryptoSuite& suite_;
  const RoleOptions& opts_;
  RoleState& st_;
  std::map<std::string, bool> options_;
  std::deque<Bytes> pending_;
  bool seen_any_ = false;
  const std::set<Position>* primed_ = nullptr;
};

}  // namespace

std::string_view role_status_name(RoleStatus s) {
  switch (s) {
    case RoleStatus::Completed: return "completed";
    case RoleStatus::ProtocolError: return "protocol-error";
    case RoleStatus::Timeout: return "timeout";
    case RoleStatus::Closed: return "closed";
  }
  return "?";
}

std::map<std::string, bool> effective_options(const ProtocolModel& m, const std::map<std::string, bool>& overrides) {
  auto out = m.options;
  for (const auto& [k, v] : overrides) out[k] = v;
  return out;
}

RoleState initial_state(const Role& role, CryptoSuite& suite) {
  RoleState st;
  st.role = role.name;
  for (const auto& p : role.parameters) st.bindings[p] = encode_given(p, suite, st.bindings);
  for (const auto& k : role.knowledge) st.bindings[k] = encode_given(k, suite, st.bindings);
  return st;
}

RoleResult run_role(const ProtocolModel& m, const Role& role, Transport& net, CryptoSuite& suite,
                    const RoleOptions& opts, RoleState* state) {
  RoleState local;
  RoleState& st = state ? *state : local;
  st = initial_state(role, suite);
  Runner r(m, role, net, suite, opts, st);
  return r.run();
}

RoleResult run_tls_server(const ProtocolModel& m, bool allow_renegotiation, Transport& net, CryptoSuite& suite,
                          const RoleOptions& opts, RoleState* state) {
  const Role* role = m.find_role("server");
  if (!role) throw std::invalid_argument("model " + m.name + " has no server role");
  RoleState local;
  RoleState& st = state ? *state : local;
  st = initial_state(*role, suite);
  Runner r(m, *role, net, suite, opts, st);
  RoleResult hs = r.run();
  if (hs.status != RoleStatus::Completed) return hs;

  // Session keys as agreed in the handshake: keygen(X, Na, Nb, prf(PMS.Na.Nb)).
  const auto& s = m.sorts;
  Term master = parse_term("prf(pair(PMS,pair(Na,Nb)))", s);
  Term client_key = Term::apply("keygen", {parse_term("A", s), parse_term("Na", s), parse_term("Nb", s), master});
  Term server_key = Term::apply("keygen", {parse_term("B", s), parse_term("Na", s), parse_term("Nb", s), master});
  int renegotiation_step = hs.transition + 1;

  std::optional<Bytes> frame;
  try {
    frame = r.receive_raw();
  } catch (const ChannelClosed&) {
    return hs;
  }
  if (!frame) return hs;  // the client never asked again
  try {
    auto ref = whole_frame(*frame);
    if (ref.tag != Tag::SCrypt) throw AlertRaised{alert::kUnexpected, "expected an encrypted handshake message"};
    Bytes hello;
    try {
      hello = suite.decrypt(r.value_of(client_key), *frame);
    } catch (const CryptoError&) {
      throw AlertRaised{alert::kCheckFailed, "not encrypted under the client session key"};
    }
    // ClientHello shape: agent . nonce . session id . preferences
    Node n = decode(hello, false);
    bool shaped = n.tag == Tag::Pair && n.kids[0].tag == Tag::Name && n.kids[1].tag == Tag::Pair &&
                  n.kids[1].kids[0].tag == Tag::Bytes && n.kids[1].kids[1].tag == Tag::Pair;
    if (!shaped) throw AlertRaised{alert::kUnexpected, "not a ClientHello"};
    if (!allow_renegotiation) throw AlertRaised{alert::kNoRenegotiation, "renegotiation refused"};
    // new ServerHello under the established server key
    Bytes sid = encode(n.kids[1].kids[1].kids[0]);
    Bytes reply = make_frame(Tag::Pair, concat(suite.nonce(), make_frame(Tag::Pair, concat(sid, r.value_of(parse_term("Pb", s))))));
    net.send(suite.scrypt(r.value_of(server_key), reply));
  } catch (const AlertRaised& a) {
    return r.raise(a, renegotiation_step);
  } catch (const CodecError& e) {
    return r.raise({alert::kDecode, e.what()}, renegotiation_step);
  } catch (const ChannelClosed& e) {
    RoleResult out = hs;
    out.status = RoleStatus::Closed;
    out.detail = e.what();
    return out;
  }
  RoleResult out = hs;
  out.transition = renegotiation_step;
  out.detail = "renegotiated";
  return out;
}

Bytes make_probe(const Bytes& honest_frame, const Term& pattern, const Position& pos, MutationKind kind) {
  Node root = decode(honest_frame, true);
  Node* n = &root;
  const Term* t = &pattern;
  for (int i : pos) {
    // APPLY nodes carry the function name as their first child
    std::size_t k = static_cast<std::size_t>(i) + (t->kind() == TermKind::Apply ? 1 : 0);
    if (k >= n->kids.size()) throw std::invalid_argument("frame does not have the pattern's shape");
    n = &n->kids[k];
    t = &t->child(static_cast<std::size_t>(i));
  }
  if (kind == MutationKind::Nonce) {
    n->tag = Tag::Bytes;
    n->payload.assign(16, 0xEE);
  } else {
    n->tag = Tag::Name;
    std::string foreign = "mallory";
    n->payload.assign(foreign.begin(), foreign.end());
  }
  n->kids.clear();
  return encode(root);
}

}  // namespace dyattack
