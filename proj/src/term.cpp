#include "dyattack/term.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <unordered_set>

namespace dyattack {

namespace {

constexpr std::string_view kSortNames[] = {"agent", "pubkey", "symkey",    "nonce",
                                           "text",  "sessionid", "prefs", "function"};

std::size_t mix(std::size_t seed, std::size_t v) {
  return seed ^ (v + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2));
}

}  // namespace

std::string_view sort_name(Sort s) { return kSortNames[static_cast<int>(s)]; }

std::optional<Sort> sort_from_name(std::string_view name) {
  for (std::size_t i = 0; i < std::size(kSortNames); ++i)
    if (kSortNames[i] == name) return static_cast<Sort>(i);
  return std::nullopt;
}

ParseError::ParseError(const std::string& what, int line, int column)
    : std::runtime_error(line > 0 ? std::to_string(line) + ":" + std::to_string(column) + ": " + what
                                  : what),
      line_(line),
      column_(column) {}

// ---------------------------------------------------------------------------
// Term construction

Term Term::make(Node n) {
  std::size_t h = std::hash<int>{}(static_cast<int>(n.kind));
  h = mix(h, std::hash<std::string>{}(n.name));
  h = mix(h, static_cast<std::size_t>(n.sort));
  h = mix(h, static_cast<std::size_t>(n.step));
  for (const auto& k : n.kids) h = mix(h, k.hash_value());
  n.hash = h;
  return Term(std::make_shared<const Node>(std::move(n)));
}

Term Term::atom(std::string name, Sort sort) {
  return make(Node{TermKind::Atom, std::move(name), sort, 0, {}, 0});
}
Term Term::fresh(std::string name, Sort sort, int origin_step) {
  return make(Node{TermKind::Fresh, std::move(name), sort, origin_step, {}, 0});
}
Term Term::pair(Term left, Term right) {
  return make(Node{TermKind::Pair, {}, Sort::Text, 0, {std::move(left), std::move(right)}, 0});
}
Term Term::crypt(Term key, Term payload) {
  return make(Node{TermKind::Crypt, {}, Sort::Text, 0, {std::move(key), std::move(payload)}, 0});
}
Term Term::scrypt(Term key, Term payload) {
  return make(Node{TermKind::SCrypt, {}, Sort::Text, 0, {std::move(key), std::move(payload)}, 0});
}
Term Term::inv(Term key) {
  return make(Node{TermKind::Inv, {}, Sort::PubKey, 0, {std::move(key)}, 0});
}
Term Term::hash(Term payload) {
  return make(Node{TermKind::Hash, {}, Sort::Text, 0, {std::move(payload)}, 0});
}
Term Term::apply(std::string fn, std::vector<Term> args) {
  return make(Node{TermKind::Apply, std::move(fn), Sort::Function, 0, std::move(args), 0});
}

Term Term::seq(const std::vector<Term>& items) {
  if (items.empty()) throw std::invalid_argument("empty sequence");
  Term acc = items.back();
  for (auto it = items.rbegin() + 1; it != items.rend(); ++it) acc = pair(*it, acc);
  return acc;
}

std::size_t Term::node_count() const {
  std::size_t n = 1;
  for (const auto& k : children()) n += k.node_count();
  return n;
}

std::size_t Term::depth() const {
  std::size_t d = 0;
  for (const auto& k : children()) d = std::max(d, k.depth());
  return d + 1;
}

bool operator==(const Term& a, const Term& b) {
  if (a.node_ == b.node_) return true;
  if (a.node_->hash != b.node_->hash) return false;
  return (a <=> b) == std::strong_ordering::equal;
}

std::strong_ordering operator<=>(const Term& a, const Term& b) {
  if (a.node_ == b.node_) return std::strong_ordering::equal;
  const auto& x = *a.node_;
  const auto& y = *b.node_;
  if (auto c = x.kind <=> y.kind; c != 0) return c;
  if (auto c = x.name.compare(y.name); c != 0) return c < 0 ? std::strong_ordering::less
                                                             : std::strong_ordering::greater;
  if (auto c = x.sort <=> y.sort; c != 0) return c;
  if (auto c = x.step <=> y.step; c != 0) return c;
  if (auto c = x.kids.size() <=> y.kids.size(); c != 0) return c;
  for (std::size_t i = 0; i < x.kids.size(); ++i)
    if (auto c = x.kids[i] <=> y.kids[i]; c != 0) return c;
  return std::strong_ordering::equal;
}

bool is_asym_key(const Term& t) {
  if (t.kind() == TermKind::Inv) return true;
  return t.is_atomic() && t.sort() == Sort::PubKey;
}

bool is_sym_key(const Term& t) {
  if (t.kind() == TermKind::Apply) return true;
  return t.is_atomic() && t.sort() == Sort::SymKey;
}

// ---------------------------------------------------------------------------
// Text helpers

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string strip_comment(std::string_view line) {
  auto p = line.find('#');
  return trim(p == std::string_view::npos ? line : line.substr(0, p));
}

std::vector<std::string> split_top_level(std::string_view s, char sep) {
  std::vector<std::string> out;
  int depth = 0;
  std::string cur;
  for (char c : s) {
    if (c == '(' || c == '{') ++depth;
    if (c == ')' || c == '}') --depth;
    if (c == sep && depth == 0) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!trim(cur).empty() || !out.empty()) out.push_back(trim(cur));
  return out;
}

void parse_sort_decl(std::string_view line, SortTable& out, int line_no) {
  for (const auto& group : split_top_level(line, ';')) {
    if (group.empty()) continue;
    auto colon = group.find(':');
    if (colon == std::string::npos) throw ParseError("expected 'sort: names'", line_no, 1);
    auto sname = trim(std::string_view(group).substr(0, colon));
    auto sort = sort_from_name(sname);
    if (!sort) throw ParseError("unknown sort '" + sname + "'", line_no, 1);
    for (const auto& id : split_top_level(std::string_view(group).substr(colon + 1), ',')) {
      if (id.empty()) continue;
      auto [it, inserted] = out.emplace(id, *sort);
      if (!inserted && it->second != *sort)
        throw ParseError("identifier '" + id + "' declared with two sorts", line_no, 1);
    }
  }
}

std::string render_sort_decls(const SortTable& sorts) {
  std::map<Sort, std::vector<std::string>> by_sort;
  for (const auto& [name, s] : sorts) by_sort[s].push_back(name);
  std::string out;
  for (const auto& [s, names] : by_sort) {
    if (!out.empty()) out += "; ";
    out += std::string(sort_name(s)) + ": ";
    for (std::size_t i = 0; i < names.size(); ++i) out += (i ? ", " : "") + names[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parser

namespace {

enum class Tok { Ident, Int, LParen, RParen, LBrace, RBrace, Comma, Dot, Prime, Under, Tilde, End };

struct Token {
  Tok kind;
  std::string text;
  std::size_t offset;
};

struct Parsed {
  Term term;
  std::vector<Position> primes;
};

class Parser {
 public:
  Parser(std::string_view src, const SortTable& sorts, bool allow_primes)
      : src_(src), sorts_(sorts), allow_primes_(allow_primes) {
    tokenize();
  }

  Parsed parse_all() {
    if (toks_.size() == 1) fail("empty term", 0);
    Parsed p = parse_seq();
    if (peek().kind != Tok::End) fail("unexpected '" + peek().text + "'", peek().offset);
    return p;
  }

 private:
  [[noreturn]] void fail(const std::string& msg, std::size_t offset) const {
    int line = 1, col = 1;
    for (std::size_t i = 0; i < offset && i < src_.size(); ++i) {
      if (src_[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ParseError(msg, line, col);
  }

  void tokenize() {
    std::size_t i = 0;
    while (i < src_.size()) {
      char c = src_[i];
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++i;
        continue;
      }
      if (std::isalpha(static_cast<unsigned char>(c))) {
        std::size_t b = i;
        while (i < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[i])) || src_[i] == '_'))
          ++i;
        toks_.push_back({Tok::Ident, std::string(src_.substr(b, i - b)), b});
        continue;
      }
      if (std::isdigit(static_cast<unsigned char>(c))) {
        std::size_t b = i;
        while (i < src_.size() && std::isdigit(static_cast<unsigned char>(src_[i]))) ++i;
        toks_.push_back({Tok::Int, std::string(src_.substr(b, i - b)), b});
        continue;
      }
      Tok k;
      switch (c) {
        case '(': k = Tok::LParen; break;
        case ')': k = Tok::RParen; break;
        case '{': k = Tok::LBrace; break;
        case '}': k = Tok::RBrace; break;
        case ',': k = Tok::Comma; break;
        case '.': k = Tok::Dot; break;
        case '\'': k = Tok::Prime; break;
        case '_': k = Tok::Under; break;
        case '~': k = Tok::Tilde; break;
        default: fail(std::string("unexpected character '") + c + "'", i);
      }
      toks_.push_back({k, std::string(1, c), i});
      ++i;
    }
    toks_.push_back({Tok::End, "end of input", src_.size()});
  }

  const Token& peek() const { return toks_[pos_]; }
  const Token& next() { return toks_[pos_++]; }
  void expect(Tok k, const char* what) {
    if (peek().kind != k) fail(std::string("expected ") + what + ", found '" + peek().text + "'",
                               peek().offset);
    ++pos_;
  }

  static std::vector<Position> prefixed(const std::vector<Position>& ps, const Position& prefix) {
    std::vector<Position> out;
    for (const auto& p : ps) {
      Position q = prefix;
      q.insert(q.end(), p.begin(), p.end());
      out.push_back(std::move(q));
    }
    return out;
  }

  static Parsed seq_of(std::vector<Parsed> items) {
    Parsed acc = std::move(items.back());
    for (auto it = items.rbegin() + 1; it != items.rend(); ++it) {
      std::vector<Position> primes = prefixed(it->primes, {0});
      auto right = prefixed(acc.primes, {1});
      primes.insert(primes.end(), right.begin(), right.end());
      acc = Parsed{Term::pair(it->term, acc.term), std::move(primes)};
    }
    return acc;
  }

  static Parsed node(Term t, std::vector<Parsed> kids) {
    std::vector<Position> primes;
    for (std::size_t i = 0; i < kids.size(); ++i) {
      auto ps = prefixed(kids[i].primes, {static_cast<int>(i)});
      primes.insert(primes.end(), ps.begin(), ps.end());
    }
    return Parsed{std::move(t), std::move(primes)};
  }

  Parsed parse_seq() {
    std::vector<Parsed> items{parse_unary()};
    while (peek().kind == Tok::Dot) {
      next();
      items.push_back(parse_unary());
    }
    return items.size() == 1 ? std::move(items.front()) : seq_of(std::move(items));
  }

  std::vector<Parsed> parse_list(Tok close, const char* what) {
    std::vector<Parsed> items;
    if (peek().kind == close) fail(std::string("empty ") + what, peek().offset);
    items.push_back(parse_seq());
    while (peek().kind == Tok::Comma) {
      next();
      items.push_back(parse_seq());
    }
    expect(close, close == Tok::RParen ? "')'" : "'}'");
    return items;
  }

  Parsed make_crypt(Parsed a, Parsed b, std::size_t offset) {
    // Key position is normally first; the payload-first form is accepted when unambiguous.
    auto build = [&](bool sym, Parsed& key, Parsed& payload) {
      Term t = sym ? Term::scrypt(key.term, payload.term) : Term::crypt(key.term, payload.term);
      return node(std::move(t), {std::move(key), std::move(payload)});
    };
    if (is_asym_key(a.term)) return build(false, a, b);
    if (is_sym_key(a.term)) return build(true, a, b);
    if (is_asym_key(b.term)) return build(false, b, a);
    if (is_sym_key(b.term)) return build(true, b, a);
    fail("crypt needs a key argument", offset);
  }

  Parsed parse_unary() {
    const Token start = peek();
    if (start.kind == Tok::LParen) {
      next();
      auto items = parse_list(Tok::RParen, "parentheses");
      return items.size() == 1 ? std::move(items.front()) : seq_of(std::move(items));
    }
    if (start.kind == Tok::LBrace) {
      next();
      auto items = parse_list(Tok::RBrace, "braces");
      Parsed body = items.size() == 1 ? std::move(items.front()) : seq_of(std::move(items));
      if (peek().kind != Tok::Under) return body;
      next();
      Parsed key = parse_unary();
      return make_crypt(std::move(key), std::move(body), start.offset);
    }
    if (start.kind != Tok::Ident) fail("expected a term, found '" + start.text + "'", start.offset);
    next();
    const std::string& id = start.text;
    if (peek().kind == Tok::LParen || peek().kind == Tok::LBrace) {
      Tok close = peek().kind == Tok::LParen ? Tok::RParen : Tok::RBrace;
      next();
      auto args = parse_list(close, "argument list");
      return call(id, std::move(args), start.offset);
    }
    if (peek().kind == Tok::Tilde) {
      next();
      if (peek().kind != Tok::Int) fail("expected step number after '~'", peek().offset);
      int step = std::stoi(next().text);
      auto it = sorts_.find(id);
      return Parsed{Term::fresh(id, it == sorts_.end() ? Sort::Nonce : it->second, step), {}};
    }
    auto it = sorts_.find(id);
    if (it == sorts_.end()) fail("unknown identifier '" + id + "'", start.offset);
    Parsed p{Term::atom(id, it->second), {}};
    if (peek().kind == Tok::Prime) {
      if (!allow_primes_) fail("primed variable not allowed here", peek().offset);
      next();
      p.primes.push_back({});
    }
    return p;
  }

  Parsed call(const std::string& id, std::vector<Parsed> args, std::size_t offset) {
    auto arity = [&](std::size_t n) {
      if (args.size() != n)
        fail(id + " expects " + std::to_string(n) + " argument(s), got " + std::to_string(args.size()),
             offset);
    };
    if (id == "pair") {
      if (args.size() < 2) fail("pair expects at least 2 arguments", offset);
      return seq_of(std::move(args));
    }
    if (id == "crypt") {
      arity(2);
      return make_crypt(std::move(args[0]), std::move(args[1]), offset);
    }
    if (id == "scrypt") {
      arity(2);
      if (!is_sym_key(args[0].term)) fail("scrypt key must be a symkey or function application", offset);
      Term t = Term::scrypt(args[0].term, args[1].term);
      return node(t, std::move(args));
    }
    if (id == "inv") {
      arity(1);
      if (!(args[0].term.is_atomic() && args[0].term.sort() == Sort::PubKey))
        fail("inv applies to pubkey atoms only", offset);
      Term t = Term::inv(args[0].term);
      return node(t, std::move(args));
    }
    if (id == "hash") {
      Parsed body = args.size() == 1 ? std::move(args.front()) : seq_of(std::move(args));
      Term t = Term::hash(body.term);
      std::vector<Parsed> kids;
      kids.push_back(std::move(body));
      return node(t, std::move(kids));
    }
    auto it = sorts_.find(id);
    if (it == sorts_.end()) fail("unknown identifier '" + id + "'", offset);
    if (it->second != Sort::Function) fail("'" + id + "' is not a function symbol", offset);
    std::vector<Term> terms;
    for (const auto& a : args) terms.push_back(a.term);
    Term t = Term::apply(id, std::move(terms));
    return node(t, std::move(args));
  }

  std::string_view src_;
  const SortTable& sorts_;
  bool allow_primes_;
  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

void render_into(const Term& t, const std::set<Position>* primed, Position& at, std::string& out) {
  auto kids = [&](std::size_t from) {
    for (std::size_t i = from; i < t.children().size(); ++i) {
      if (i > from) out += ',';
      at.push_back(static_cast<int>(i));
      render_into(t.child(i), primed, at, out);
      at.pop_back();
    }
  };
  switch (t.kind()) {
    case TermKind::Atom:
      out += t.name();
      if (primed && primed->count(at)) out += '\'';
      return;
    case TermKind::Fresh:
      out += t.name() + "~" + std::to_string(t.origin_step());
      return;
    case TermKind::Pair: out += "pair("; break;
    case TermKind::Crypt: out += "crypt("; break;
    case TermKind::SCrypt: out += "scrypt("; break;
    case TermKind::Inv: out += "inv("; break;
    case TermKind::Hash: out += "hash("; break;
    case TermKind::Apply: out += t.name() + "("; break;
  }
  kids(0);
  out += ')';
}

}  // namespace

Term parse_term(std::string_view src, const SortTable& sorts) {
  return Parser(src, sorts, false).parse_all().term;
}

Pattern parse_pattern(std::string_view src, const SortTable& sorts) {
  auto p = Parser(src, sorts, true).parse_all();
  std::set<Position> primed(p.primes.begin(), p.primes.end());
  return Pattern{std::move(p.term), std::move(primed)};
}

std::string render_term(const Term& t) {
  std::string out;
  Position at;
  render_into(t, nullptr, at, out);
  return out;
}

std::string render_pattern(const Term& t, const std::set<Position>& primed) {
  std::string out;
  Position at;
  render_into(t, &primed, at, out);
  return out;
}

std::vector<Term> subterms(const Term& t) {
  std::vector<Term> out;
  std::unordered_set<Term, TermHash> seen;
  std::function<void(const Term&)> walk = [&](const Term& u) {
    if (!seen.insert(u).second) return;
    out.push_back(u);
    for (const auto& k : u.children()) walk(k);
  };
  walk(t);
  return out;
}

std::vector<std::pair<Position, Term>> atom_occurrences(const Term& t) {
  std::vector<std::pair<Position, Term>> out;
  Position at;
  std::function<void(const Term&)> walk = [&](const Term& u) {
    if (u.is_atomic()) {
      out.emplace_back(at, u);
      return;
    }
    for (std::size_t i = 0; i < u.children().size(); ++i) {
      at.push_back(static_cast<int>(i));
      walk(u.child(i));
      at.pop_back();
    }
  };
  walk(t);
  return out;
}

const Term& term_at(const Term& t, const Position& p) {
  const Term* cur = &t;
  for (int i : p) cur = &cur->child(static_cast<std::size_t>(i));
  return *cur;
}

Term replace_at(const Term& t, const Position& p, const Term& replacement) {
  std::function<Term(const Term&, std::size_t)> go = [&](const Term& u, std::size_t depth) -> Term {
    if (depth == p.size()) return replacement;
    std::vector<Term> kids = u.children();
    auto i = static_cast<std::size_t>(p[depth]);
    kids.at(i) = go(kids[i], depth + 1);
    switch (u.kind()) {
      case TermKind::Pair: return Term::pair(kids[0], kids[1]);
      case TermKind::Crypt: return Term::crypt(kids[0], kids[1]);
      case TermKind::SCrypt: return Term::scrypt(kids[0], kids[1]);
      case TermKind::Inv: return Term::inv(kids[0]);
      case TermKind::Hash: return Term::hash(kids[0]);
      case TermKind::Apply: return Term::apply(u.name(), kids);
      default: throw std::out_of_range("position descends into an atom");
    }
  };
  return go(t, 0);
}

}  // namespace dyattack
