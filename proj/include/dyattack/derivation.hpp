#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dyattack/term.hpp"

namespace dyattack {

enum class RecipeKind {
  IKnown,
  ReceivedAt,
  GeneratedNonceAt,
  Pair,
  Crypt,
  SCrypt,
  Hash,
  Apply,
  Unpair1,
  Unpair2,
  Decrypt,
};

/// One primitive operation over knowledge indices. For Decrypt, args = {key, ciphertext}.
struct Recipe {
  RecipeKind kind = RecipeKind::IKnown;
  int step = 0;
  std::vector<int> args;
  std::string fn;

  static Recipe iknown() { return {RecipeKind::IKnown, 0, {}, {}}; }
  static Recipe received_at(int step) { return {RecipeKind::ReceivedAt, step, {}, {}}; }
  static Recipe generated_nonce_at(int step) { return {RecipeKind::GeneratedNonceAt, step, {}, {}}; }
  static Recipe op(RecipeKind k, std::vector<int> args, std::string fn = {}) {
    return {k, 0, std::move(args), std::move(fn)};
  }

  bool is_composition() const;
  bool is_decomposition() const;

  friend bool operator==(const Recipe&, const Recipe&) = default;
};

/// `"received at step:1"`, `pair(15,2)`, `apply(prf,3,4)`, `iknown`.
std::string render_recipe(const Recipe& r);
Recipe parse_recipe(std::string_view src);

/// Indexed intruder knowledge. Indices are handed out once and never reused; an index
/// may be reserved for a term that is known to exist (a subterm of an opaque message)
/// before it becomes derivable.
class KnowledgeBase {
 public:
  struct Entry {
    Term term;
    Recipe recipe;
  };

  /// Appends at the next free index.
  int add(Term t, Recipe r);
  /// Fills an index previously returned by allocate() or reserved.
  void add_at(int index, Term t, Recipe r);
  int allocate() { return next_index_++; }

  std::optional<int> find(const Term& t) const;
  const Entry& at(int index) const { return entries_.at(index); }
  bool contains(int index) const { return entries_.count(index) > 0; }
  const std::map<int, Entry>& entries() const { return entries_; }
  int next_index() const { return next_index_; }
  std::size_t size() const { return entries_.size(); }

  /// Reserves indices, in pre-order, for every subterm of t that is not yet known.
  /// t itself is skipped.
  void reserve_subterms(const Term& t);
  std::optional<int> reservation(const Term& t) const;
  const std::map<Term, int>& reservations() const { return reserved_; }

  void mark_decomposed(int index) { decomposed_.insert(index); }
  bool is_decomposed(int index) const { return decomposed_.count(index) > 0; }

  /// Entry indices in the order they were added.
  const std::vector<int>& acquisition_order() const { return order_; }

 private:
  void check_recipe(int index, const Recipe& r) const;

  std::map<int, Entry> entries_;
  std::map<Term, int> index_of_;
  std::map<Term, int> reserved_;
  std::set<int> decomposed_;
  std::vector<int> order_;
  int next_index_ = 0;
};

struct SaturationResult {
  /// New entries, in the order they were added.
  std::vector<int> added;
  /// Decompositions whose result was already known: (existing index, recipe).
  std::vector<std::pair<int, Recipe>> checks;
  bool changed() const { return !added.empty() || !checks.empty(); }
};

/// Closes kb under projection and decryption with derivable keys.
SaturationResult saturate(KnowledgeBase& kb);

bool is_derivable(const KnowledgeBase& kb, const Term& t);

struct DeriveOptions {
  /// Underivable nonce atoms become fresh entries generated at `step`.
  bool allow_fresh_nonces = false;
  int step = 0;
};

struct DerivationResult {
  bool derivable = false;
  int root = -1;
  /// New entries in emission (bottom-up) order.
  std::vector<int> new_entries;
  /// Underivable atomic positions when !derivable.
  std::vector<Term> missing;
};

/// Composes t from kb, appending the composition entries it needs. Indices are allocated
/// top-down (root first) and recipes emitted bottom-up, left argument first.
DerivationResult derive(KnowledgeBase& kb, const Term& t, const DeriveOptions& opts = {});

/// Term a recipe builds from terms already in kb. Throws std::invalid_argument when the
/// recipe does not apply (wrong shape or missing key).
Term evaluate_recipe(const KnowledgeBase& kb, const Recipe& r);
/// Same, over explicit argument terms.
Term apply_recipe(const Recipe& r, const std::vector<Term>& args);

}  // namespace dyattack
