#pragma once

#include <compare>
#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dyattack {

enum class Sort { Agent, PubKey, SymKey, Nonce, Text, SessionId, Prefs, Function };

std::string_view sort_name(Sort s);
std::optional<Sort> sort_from_name(std::string_view name);

/// Identifier -> sort declarations shared by a model and everything parsed against it.
using SortTable = std::map<std::string, Sort, std::less<>>;

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, int line, int column);
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

enum class TermKind { Atom, Pair, Crypt, SCrypt, Inv, Hash, Apply, Fresh };

/// Immutable symbolic message. Copies share structure; equality and ordering are structural.
class Term {
 public:
  static Term atom(std::string name, Sort sort);
  static Term fresh(std::string name, Sort sort, int origin_step);
  static Term pair(Term left, Term right);
  static Term crypt(Term key, Term payload);
  static Term scrypt(Term key, Term payload);
  static Term inv(Term key);
  static Term hash(Term payload);
  static Term apply(std::string fn, std::vector<Term> args);

  /// Right-nested pairs: seq({a,b,c}) == pair(a, pair(b, c)).
  static Term seq(const std::vector<Term>& items);

  TermKind kind() const { return node_->kind; }
  const std::string& name() const { return node_->name; }
  Sort sort() const { return node_->sort; }
  int origin_step() const { return node_->step; }
  const std::vector<Term>& children() const { return node_->kids; }
  const Term& child(std::size_t i) const { return node_->kids.at(i); }

  bool is_atomic() const { return kind() == TermKind::Atom || kind() == TermKind::Fresh; }
  std::size_t node_count() const;
  std::size_t depth() const;
  std::size_t hash_value() const { return node_->hash; }

  friend bool operator==(const Term& a, const Term& b);
  friend std::strong_ordering operator<=>(const Term& a, const Term& b);

 private:
  struct Node {
    TermKind kind;
    std::string name;
    Sort sort = Sort::Text;
    int step = 0;
    std::vector<Term> kids;
    std::size_t hash = 0;
  };
  explicit Term(std::shared_ptr<const Node> n) : node_(std::move(n)) {}
  static Term make(Node n);

  std::shared_ptr<const Node> node_;
};

struct TermHash {
  std::size_t operator()(const Term& t) const { return t.hash_value(); }
};

/// Path of child indices from the root of a term to one occurrence.
using Position = std::vector<int>;

/// A parsed pattern: the term plus the positions of primed atom occurrences (`Na'`).
struct Pattern {
  Term term;
  std::set<Position> primed;
};

/// Parses a term. Accepts `pair(a,b)`, `crypt(k,m)`, `pair{a,b}`, `{m}_k`, and
/// right-associated dot concatenation `a.b.c`. Primes are rejected.
Term parse_term(std::string_view src, const SortTable& sorts);

/// Like parse_term but accepts primed atoms and reports their positions.
Pattern parse_pattern(std::string_view src, const SortTable& sorts);

/// Canonical functional form: `crypt(kb,pair(Na,a))`.
std::string render_term(const Term& t);
std::string render_pattern(const Term& t, const std::set<Position>& primed);

/// t and every transitive sub-position, deduplicated, in pre-order of first occurrence.
std::vector<Term> subterms(const Term& t);

/// Pre-order list of (position, atom) for every atomic occurrence.
std::vector<std::pair<Position, Term>> atom_occurrences(const Term& t);

const Term& term_at(const Term& t, const Position& p);
Term replace_at(const Term& t, const Position& p, const Term& replacement);

/// Atoms usable as an asymmetric key (pubkey atoms and their inverses).
bool is_asym_key(const Term& t);
/// Terms usable as a symmetric key (symkey atoms and function applications).
bool is_sym_key(const Term& t);

/// Text shared by all grammars: strips `#` comments and surrounding whitespace.
std::string strip_comment(std::string_view line);
std::string trim(std::string_view s);
std::vector<std::string> split_top_level(std::string_view s, char sep);

/// Parses `agent: a, b; nonce: Na` style declarations into a table.
void parse_sort_decl(std::string_view line, SortTable& out, int line_no);
std::string render_sort_decls(const SortTable& sorts);

}  // namespace dyattack
