#include "dyattack/derivation.hpp"

#include <algorithm>
#include <functional>
#include <stdexcept>

namespace dyattack {

bool Recipe::is_composition() const {
  switch (kind) {
    case RecipeKind::Pair:
    case RecipeKind::Crypt:
    case RecipeKind::SCrypt:
    case RecipeKind::Hash:
    case RecipeKind::Apply: return true;
    default: return false;
  }
}

bool Recipe::is_decomposition() const {
  return kind == RecipeKind::Unpair1 || kind == RecipeKind::Unpair2 || kind == RecipeKind::Decrypt;
}

std::string render_recipe(const Recipe& r) {
  auto args = [&](std::string head) {
    head += '(';
    if (!r.fn.empty()) head += r.fn + (r.args.empty() ? "" : ",");
    for (std::size_t i = 0; i < r.args.size(); ++i) head += (i ? "," : "") + std::to_string(r.args[i]);
    return head + ')';
  };
  switch (r.kind) {
    case RecipeKind::IKnown: return "iknown";
    case RecipeKind::ReceivedAt: return "\"received at step:" + std::to_string(r.step) + "\"";
    case RecipeKind::GeneratedNonceAt: return "\"generated nonce at step:" + std::to_string(r.step) + "\"";
    case RecipeKind::Pair: return args("pair");
    case RecipeKind::Crypt: return args("crypt");
    case RecipeKind::SCrypt: return args("scrypt");
    case RecipeKind::Hash: return args("hash");
    case RecipeKind::Apply: return args("apply");
    case RecipeKind::Unpair1: return args("unpair1");
    case RecipeKind::Unpair2: return args("unpair2");
    case RecipeKind::Decrypt: return args("decrypt");
  }
  return {};
}

Recipe parse_recipe(std::string_view src) {
  std::string s = trim(src);
  auto quoted = [&](std::string_view prefix) -> std::optional<int> {
    std::string p = "\"" + std::string(prefix);
    if (s.size() < p.size() + 1 || s.compare(0, p.size(), p) != 0 || s.back() != '"') return std::nullopt;
    auto num = s.substr(p.size(), s.size() - p.size() - 1);
    if (num.empty() || !std::all_of(num.begin(), num.end(), ::isdigit))
      throw std::invalid_argument("bad step number in recipe '" + s + "'");
    return std::stoi(num);
  };
  if (s == "iknown") return Recipe::iknown();
  if (auto n = quoted("received at step:")) return Recipe::received_at(*n);
  if (auto n = quoted("generated nonce at step:")) return Recipe::generated_nonce_at(*n);
  auto open = s.find('(');
  if (open == std::string::npos || s.back() != ')') throw std::invalid_argument("malformed recipe '" + s + "'");
  std::string head = s.substr(0, open);
  auto parts = split_top_level(std::string_view(s).substr(open + 1, s.size() - open - 2), ',');
  static const std::map<std::string, std::pair<RecipeKind, int>> kinds = {
      {"pair", {RecipeKind::Pair, 2}},       {"crypt", {RecipeKind::Crypt, 2}},
      {"scrypt", {RecipeKind::SCrypt, 2}},   {"hash", {RecipeKind::Hash, 1}},
      {"apply", {RecipeKind::Apply, -1}},    {"unpair1", {RecipeKind::Unpair1, 1}},
      {"unpair2", {RecipeKind::Unpair2, 1}}, {"decrypt", {RecipeKind::Decrypt, 2}},
  };
  auto it = kinds.find(head);
  if (it == kinds.end()) throw std::invalid_argument("unknown recipe '" + head + "'");
  Recipe r;
  r.kind = it->second.first;
  std::size_t first = 0;
  if (r.kind == RecipeKind::Apply) {
    if (parts.empty() || parts[0].empty()) throw std::invalid_argument("apply needs a function name");
    r.fn = parts[0];
    first = 1;
  }
  for (std::size_t i = first; i < parts.size(); ++i) {
    const auto& p = parts[i];
    if (p.empty() || !std::all_of(p.begin(), p.end(), ::isdigit))
      throw std::invalid_argument("recipe argument '" + p + "' is not an index");
    r.args.push_back(std::stoi(p));
  }
  int want = it->second.second;
  if (want >= 0 && static_cast<int>(r.args.size()) != want)
    throw std::invalid_argument(head + " expects " + std::to_string(want) + " index argument(s)");
  return r;
}

// ---------------------------------------------------------------------------

void KnowledgeBase::check_recipe(int index, const Recipe& r) const {
  for (int a : r.args)
    if (!entries_.count(a))
      throw std::logic_error("recipe for index " + std::to_string(index) + " references undefined index " +
                             std::to_string(a));
}

int KnowledgeBase::add(Term t, Recipe r) {
  int idx = allocate();
  add_at(idx, std::move(t), std::move(r));
  return idx;
}

void KnowledgeBase::add_at(int index, Term t, Recipe r) {
  if (index >= next_index_) throw std::logic_error("index " + std::to_string(index) + " was never allocated");
  if (entries_.count(index)) throw std::logic_error("index " + std::to_string(index) + " already used");
  check_recipe(index, r);
  if (auto it = reserved_.find(t); it != reserved_.end() && it->second == index) reserved_.erase(it);
  index_of_.emplace(t, index);
  entries_.emplace(index, Entry{std::move(t), std::move(r)});
  order_.push_back(index);
}

std::optional<int> KnowledgeBase::find(const Term& t) const {
  auto it = index_of_.find(t);
  if (it == index_of_.end()) return std::nullopt;
  return it->second;
}

void KnowledgeBase::reserve_subterms(const Term& t) {
  std::function<void(const Term&, bool)> walk = [&](const Term& u, bool root) {
    if (!root && !find(u) && !reserved_.count(u)) reserved_.emplace(u, allocate());
    for (const auto& k : u.children()) walk(k, false);
  };
  walk(t, true);
}

std::optional<int> KnowledgeBase::reservation(const Term& t) const {
  auto it = reserved_.find(t);
  if (it == reserved_.end()) return std::nullopt;
  return it->second;
}

// ---------------------------------------------------------------------------

bool is_derivable(const KnowledgeBase& kb, const Term& t) {
  if (kb.find(t)) return true;
  switch (t.kind()) {
    case TermKind::Pair:
    case TermKind::Crypt:
    case TermKind::SCrypt:
    case TermKind::Hash:
    case TermKind::Apply:
      return std::all_of(t.children().begin(), t.children().end(),
                         [&](const Term& k) { return is_derivable(kb, k); });
    default: return false;
  }
}

namespace {

RecipeKind composition_kind(TermKind k) {
  switch (k) {
    case TermKind::Pair: return RecipeKind::Pair;
    case TermKind::Crypt: return RecipeKind::Crypt;
    case TermKind::SCrypt: return RecipeKind::SCrypt;
    case TermKind::Hash: return RecipeKind::Hash;
    case TermKind::Apply: return RecipeKind::Apply;
    default: throw std::logic_error("not a constructor");
  }
}

bool is_constructor(const Term& t) {
  switch (t.kind()) {
    case TermKind::Pair:
    case TermKind::Crypt:
    case TermKind::SCrypt:
    case TermKind::Hash:
    case TermKind::Apply: return true;
    default: return false;
  }
}

void collect_missing(const KnowledgeBase& kb, const Term& t, const DeriveOptions& opts, std::vector<Term>& out) {
  if (kb.find(t)) return;
  if (is_constructor(t)) {
    for (const auto& k : t.children()) collect_missing(kb, k, opts, out);
    return;
  }
  if (opts.allow_fresh_nonces && t.kind() == TermKind::Atom && t.sort() == Sort::Nonce) return;
  if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
}

}  // namespace

DerivationResult derive(KnowledgeBase& kb, const Term& t, const DeriveOptions& opts) {
  DerivationResult res;
  collect_missing(kb, t, opts, res.missing);
  if (!res.missing.empty()) return res;

  std::function<int(const Term&)> build = [&](const Term& u) -> int {
    if (auto idx = kb.find(u)) return *idx;
    int idx = kb.allocate();
    if (!is_constructor(u)) {
      kb.add_at(idx, u, Recipe::generated_nonce_at(opts.step));
    } else {
      std::vector<int> args;
      for (const auto& k : u.children()) args.push_back(build(k));
      kb.add_at(idx, u, Recipe::op(composition_kind(u.kind()), std::move(args),
                                   u.kind() == TermKind::Apply ? u.name() : std::string{}));
    }
    kb.mark_decomposed(idx);
    res.new_entries.push_back(idx);
    return idx;
  };
  res.root = build(t);
  res.derivable = true;
  return res;
}

SaturationResult saturate(KnowledgeBase& kb) {
  SaturationResult res;
  auto yield = [&](const Term& t, Recipe r) {
    if (auto j = kb.find(t)) {
      res.checks.emplace_back(*j, std::move(r));
      return;
    }
    int idx = kb.reservation(t).value_or(-1);
    if (idx < 0) idx = kb.allocate();
    kb.add_at(idx, t, std::move(r));
    res.added.push_back(idx);
  };
  auto ensure = [&](const Term& key) -> int {
    auto d = derive(kb, key);
    res.added.insert(res.added.end(), d.new_entries.begin(), d.new_entries.end());
    return d.root;
  };

  bool changed = true;
  while (changed) {
    changed = false;
    std::vector<int> pending;
    for (const auto& [idx, e] : kb.entries())
      if (!kb.is_decomposed(idx)) pending.push_back(idx);
    for (int idx : pending) {
      const Term t = kb.at(idx).term;
      switch (t.kind()) {
        case TermKind::Pair:
          kb.mark_decomposed(idx);
          yield(t.child(0), Recipe::op(RecipeKind::Unpair1, {idx}));
          yield(t.child(1), Recipe::op(RecipeKind::Unpair2, {idx}));
          changed = true;
          break;
        case TermKind::Crypt: {
          const Term& key = t.child(0);
          std::optional<int> kidx;
          if (key.kind() == TermKind::Inv) {
            // Signature: verifying with the public key recovers the payload.
            if (is_derivable(kb, key.child(0))) kidx = ensure(key.child(0));
          } else {
            kidx = kb.find(Term::inv(key));
          }
          if (kidx) {
            kb.mark_decomposed(idx);
            yield(t.child(1), Recipe::op(RecipeKind::Decrypt, {*kidx, idx}));
            changed = true;
          }
          break;
        }
        case TermKind::SCrypt:
          if (is_derivable(kb, t.child(0))) {
            int kidx = ensure(t.child(0));
            kb.mark_decomposed(idx);
            yield(t.child(1), Recipe::op(RecipeKind::Decrypt, {kidx, idx}));
            changed = true;
          }
          break;
        default: kb.mark_decomposed(idx); break;
      }
    }
  }
  return res;
}

Term apply_recipe(const Recipe& r, const std::vector<Term>& args) {
  auto arg = [&](std::size_t i) -> const Term& {
    if (i >= args.size()) throw std::invalid_argument("missing recipe argument");
    return args[i];
  };
  switch (r.kind) {
    case RecipeKind::Pair: return Term::pair(arg(0), arg(1));
    case RecipeKind::Crypt: return Term::crypt(arg(0), arg(1));
    case RecipeKind::SCrypt: return Term::scrypt(arg(0), arg(1));
    case RecipeKind::Hash: return Term::hash(arg(0));
    case RecipeKind::Apply: return Term::apply(r.fn, args);
    case RecipeKind::Unpair1:
    case RecipeKind::Unpair2: {
      const Term& p = arg(0);
      if (p.kind() != TermKind::Pair) throw std::invalid_argument("unpair of a non-pair");
      return p.child(r.kind == RecipeKind::Unpair1 ? 0 : 1);
    }
    case RecipeKind::Decrypt: {
      const Term& key = arg(0);
      const Term& c = arg(1);
      bool ok = false;
      if (c.kind() == TermKind::Crypt) {
        const Term& k = c.child(0);
        ok = k.kind() == TermKind::Inv ? key == k.child(0) : key == Term::inv(k);
      } else if (c.kind() == TermKind::SCrypt) {
        ok = key == c.child(0);
      }
      if (!ok) throw std::invalid_argument("decrypt with the wrong key");
      return c.child(1);
    }
    default: throw std::invalid_argument("recipe has no symbolic evaluation");
  }
}

Term evaluate_recipe(const KnowledgeBase& kb, const Recipe& r) {
  std::vector<Term> args;
  for (int a : r.args) {
    if (!kb.contains(a)) throw std::invalid_argument("missing recipe argument");
    args.push_back(kb.at(a).term);
  }
  return apply_recipe(r, args);
}

}  // namespace dyattack
