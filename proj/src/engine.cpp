#include "dyattack/engine.hpp"

namespace dyattack {

Bytes Encoder::encode(const Term& t) {
  switch (t.kind()) {
    case TermKind::Atom:
    case TermKind::Fresh: {
      if (t.kind() == TermKind::Atom && t.sort() != Sort::Nonce) return name_frame(t.name());
      auto it = nonces_.find(t);
      if (it == nonces_.end()) it = nonces_.emplace(t, suite_.nonce()).first;
      return it->second;
    }
    case TermKind::Inv: return name_frame(render_term(t));
    case TermKind::Pair: return make_frame(Tag::Pair, concat(encode(t.child(0)), encode(t.child(1))));
    case TermKind::Crypt: return suite_.crypt(encode(t.child(0)), encode(t.child(1)));
    case TermKind::SCrypt: return suite_.scrypt(encode(t.child(0)), encode(t.child(1)));
    case TermKind::Hash: return suite_.hash(encode(t.child(0)));
    case TermKind::Apply: {
      std::vector<Bytes> args;
      for (const auto& k : t.children()) args.push_back(encode(k));
      return suite_.apply(t.name(), args);
    }
  }
  throw std::logic_error("unhandled term kind");
}

const Bytes* Encoder::lookup(const Term& atom) const {
  auto it = nonces_.find(atom);
  return it == nonces_.end() ? nullptr : &it->second;
}

Bytes primitive(const Recipe& r, const std::vector<Bytes>& args, CryptoSuite& suite) {
  auto arity = [&](std::size_t n) {
    if (args.size() != n) throw std::invalid_argument("wrong number of recipe arguments");
  };
  switch (r.kind) {
    case RecipeKind::Pair: arity(2); return make_frame(Tag::Pair, concat(args[0], args[1]));
    case RecipeKind::Crypt: arity(2); return suite.crypt(args[0], args[1]);
    case RecipeKind::SCrypt: arity(2); return suite.scrypt(args[0], args[1]);
    case RecipeKind::Hash: arity(1); return suite.hash(args[0]);
    case RecipeKind::Apply: return suite.apply(r.fn, args);
    case RecipeKind::Unpair1:
    case RecipeKind::Unpair2: {
      arity(1);
      if (whole_frame(args[0]).tag != Tag::Pair) throw CodecError("unpair of a non-PAIR frame");
      auto parts = split_frames(payload_of(args[0]));
      if (parts.size() != 2) throw CodecError("PAIR must hold two frames");
      return parts[r.kind == RecipeKind::Unpair1 ? 0 : 1];
    }
    case RecipeKind::Decrypt: arity(2); return suite.decrypt(args[0], args[1]);
    default: throw std::invalid_argument("recipe is not a primitive operation");
  }
}

bool DataStore::write(int index, const Bytes& value) {
  auto [it, inserted] = slots_.emplace(index, value);
  return inserted || it->second == value;
}

const Bytes& DataStore::read(int index) const {
  auto it = slots_.find(index);
  if (it == slots_.end()) throw std::logic_error("slot " + std::to_string(index) + " is empty");
  return it->second;
}

std::string_view exec_status_name(ExecStatus s) {
  switch (s) {
    case ExecStatus::Finished: return "finished";
    case ExecStatus::Rejected: return "rejected";
    case ExecStatus::Mismatch: return "mismatch";
    case ExecStatus::Timeout: return "timeout";
    case ExecStatus::Aborted: return "aborted";
  }
  return "?";
}

std::optional<std::string> default_error_classifier(const Bytes& frame) {
  if (frame.size() == kHeaderSize + 1 && frame[0] == static_cast<std::uint8_t>(Tag::Alert))
    return "alert 0x" + to_hex(Bytes{frame[5]});
  return std::nullopt;
}

ExecutionReport execute(const Scenario& s, Encoder& enc, Transport& net, const ExecutionOptions& opts,
                        DataStore* external) {
  DataStore local;
  DataStore& store = external ? *external : local;
  ExecutionReport rep;
  auto classify = opts.classify_error ? opts.classify_error : default_error_classifier;
  auto stop = [&](ExecStatus st, int step, int index, std::string reason) {
    rep.status = st;
    rep.step = step;
    rep.index = index;
    rep.reason = std::move(reason);
    return rep;
  };

  for (const auto& [i, t] : s.initial) store.write(i, enc.encode(t));

  for (const auto& st : s.steps) {
    if (st.action == ActionKind::Finish) {
      ++rep.counters.finishes;
      return stop(ExecStatus::Finished, st.number, -1, {});
    }
    for (const auto& [idx, r] : st.recipes) {
      Bytes value;
      if (r.kind == RecipeKind::ReceivedAt) {
        std::optional<Bytes> frame;
        try {
          frame = net.receive(opts.step_timeout);
        } catch (const std::exception& e) {
          return stop(ExecStatus::Aborted, st.number, idx, e.what());
        }
        if (!frame) return stop(ExecStatus::Timeout, st.number, idx, "no message before the deadline");
        if (auto err = classify(*frame)) return stop(ExecStatus::Rejected, st.number, idx, *err);
        ++rep.counters.receive_stores;
        value = std::move(*frame);
      } else if (r.kind == RecipeKind::GeneratedNonceAt) {
        ++rep.counters.primitive_calls;
        value = enc.encode(Term::fresh("n" + std::to_string(idx), Sort::Nonce, r.step));
      } else {
        std::vector<Bytes> args;
        for (int a : r.args) args.push_back(store.read(a));
        ++rep.counters.primitive_calls;
        try {
          value = primitive(r, args, enc.suite());
        } catch (const std::exception& e) {
          return stop(ExecStatus::Mismatch, st.number, idx, render_recipe(r) + ": " + e.what());
        }
      }
      if (!store.write(idx, value))
        return stop(ExecStatus::Mismatch, st.number, idx, "value differs from slot " + std::to_string(idx));
    }
    if (st.action == ActionKind::Send) {
      ++rep.counters.send_fetches;
      const Bytes& out = store.read(st.index);
      try {
        net.send(out);
      } catch (const std::exception& e) {
        return stop(ExecStatus::Aborted, st.number, st.index, e.what());
      }
    }
  }
  return stop(ExecStatus::Aborted, -1, -1, "scenario has no finish()");
}

}  // namespace dyattack
