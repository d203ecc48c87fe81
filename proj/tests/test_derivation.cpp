#include <random>

#include "doctest.h"
#include "dyattack/derivation.hpp"
#include "oracle/closure_oracle.hpp"
#include "term_gen.hpp"

using namespace dyattack;

namespace {

SortTable nspk_sorts() {
  SortTable s;
  parse_sort_decl("agent: a, b, i; pubkey: ka, kb, ki; symkey: K; nonce: Na, Nb; text: start; function: f", s, 1);
  return s;
}

KnowledgeBase kb_of(const std::vector<Term>& terms) {
  KnowledgeBase kb;
  for (const auto& t : terms) kb.add(t, Recipe::iknown());
  return kb;
}

// Every recipe argument is defined before the entry that uses it.
void check_index_discipline(const KnowledgeBase& kb) {
  std::set<int> defined;
  for (int idx : kb.acquisition_order()) {
    for (int a : kb.at(idx).recipe.args) CHECK(defined.count(a) == 1);
    defined.insert(idx);
  }
}

}  // namespace

TEST_CASE("recipe render/parse") {
  for (const char* s : {"iknown", "\"received at step:1\"", "\"generated nonce at step:2\"", "pair(15,2)",
                        "crypt(3,12)", "scrypt(1,2)", "hash(4)", "apply(prf,3,4)", "unpair1(9)", "unpair2(9)",
                        "decrypt(6,8)"}) {
    CHECK(render_recipe(parse_recipe(s)) == s);
  }
  CHECK(parse_recipe("\"received at step:3\"") == Recipe::received_at(3));
  CHECK_THROWS(parse_recipe("pair(1)"));
  CHECK_THROWS(parse_recipe("frobnicate(1,2)"));
}

TEST_CASE("saturation opens what the intruder can open") {
  auto s = nspk_sorts();
  auto t = [&](const char* src) { return parse_term(src, s); };
  auto kb = kb_of({t("ki"), t("inv(ki)"), t("crypt(ki,pair(Na,a))"), t("crypt(kb,Nb)")});
  auto res = saturate(kb);
  CHECK(kb.find(t("pair(Na,a)")));
  CHECK(kb.find(t("Na")));
  CHECK(kb.find(t("a")));
  CHECK_FALSE(kb.find(t("Nb")));
  CHECK(res.added.size() == 3);
  // decrypt(inv(ki), ciphertext)
  auto pidx = *kb.find(t("pair(Na,a)"));
  CHECK(kb.at(pidx).recipe == Recipe::op(RecipeKind::Decrypt, {1, 2}));
  // second run is a no-op
  CHECK_FALSE(saturate(kb).changed());
}

TEST_CASE("saturation: signatures and symmetric keys") {
  auto s = nspk_sorts();
  auto t = [&](const char* src) { return parse_term(src, s); };
  auto kb = kb_of({t("ka"), t("crypt(inv(ka),Na)"), t("scrypt(f(Na),Nb)")});
  saturate(kb);
  CHECK(kb.find(t("Na")));
  // f(Na) becomes composable once Na is out, which opens the scrypt
  CHECK(kb.find(t("Nb")));
  check_index_discipline(kb);
}

TEST_CASE("saturation records redundant decompositions as checks") {
  auto s = nspk_sorts();
  auto t = [&](const char* src) { return parse_term(src, s); };
  auto kb = kb_of({t("a"), t("pair(a,b)")});
  auto res = saturate(kb);
  REQUIRE(res.checks.size() == 1);
  CHECK(res.checks[0].first == 0);
  CHECK(res.checks[0].second == Recipe::op(RecipeKind::Unpair1, {1}));
}

TEST_CASE("derive: composition order of the nonce response") {
  auto s = nspk_sorts();
  KnowledgeBase kb;
  for (const char* src : {"start", "a", "b", "ka", "kb", "ki", "inv(ki)", "i"}) kb.add(parse_term(src, s), Recipe::iknown());
  kb.add(parse_term("crypt(kb,pair(Na,a))", s), Recipe::received_at(1));
  kb.reserve_subterms(parse_term("crypt(kb,pair(Na,a))", s));
  CHECK(kb.next_index() == 11);
  // Na is reserved, not known: the intruder has to make up its own nonces.
  auto d = derive(kb, parse_term("crypt(ka,pair(Na,pair(Nb,b)))", s), {true, 2});
  REQUIRE(d.derivable);
  CHECK(d.root == 11);
  CHECK(d.new_entries == std::vector<int>{13, 15, 14, 12, 11});
  CHECK(render_recipe(kb.at(13).recipe) == "\"generated nonce at step:2\"");
  CHECK(render_recipe(kb.at(15).recipe) == "\"generated nonce at step:2\"");
  CHECK(render_recipe(kb.at(14).recipe) == "pair(15,2)");
  CHECK(render_recipe(kb.at(12).recipe) == "pair(13,14)");
  CHECK(render_recipe(kb.at(11).recipe) == "crypt(3,12)");
  CHECK(kb.at(15).term == parse_term("Nb", s));
}

TEST_CASE("derive reports missing atoms") {
  auto s = nspk_sorts();
  auto kb = kb_of({parse_term("a", s)});
  auto d = derive(kb, parse_term("pair(a,pair(b,Na))", s));
  CHECK_FALSE(d.derivable);
  CHECK(d.missing == std::vector<Term>{parse_term("b", s), parse_term("Na", s)});
  CHECK(kb.size() == 1);
}

TEST_CASE("evaluate_recipe agrees with the entry it produced") {
  auto s = nspk_sorts();
  auto kb = kb_of({parse_term("kb", s), parse_term("K", s), parse_term("scrypt(K,pair(Na,kb))", s)});
  saturate(kb);
  for (const auto& [idx, e] : kb.entries()) {
    if (e.recipe.kind == RecipeKind::IKnown) continue;
    CHECK(evaluate_recipe(kb, e.recipe) == e.term);
  }
  CHECK_THROWS_AS(evaluate_recipe(kb, Recipe::op(RecipeKind::Decrypt, {0, 2})), std::invalid_argument);
}

// Exhaustive sweep: every knowledge base of at most six atoms drawn from the pool below,
// every target of depth <= 3 over the pool. Two independent oracles: bottom-up
// enumeration of what is buildable, and the subterm fixpoint.
TEST_CASE("property: atom knowledge bases agree with brute-force enumeration") {
  const Term ka = Term::atom("ka", Sort::PubKey), kb = Term::atom("kb", Sort::PubKey);
  const std::vector<Term> pool = {Term::atom("a", Sort::Agent), Term::atom("b", Sort::Agent), ka, kb,
                                  Term::inv(ka), Term::inv(kb), Term::atom("n1", Sort::Nonce),
                                  Term::atom("n2", Sort::Nonce)};
  // Targets: depth 3 over the full pool, thinned deterministically to keep the sweep short.
  auto all_targets = oracle::enumerate(pool, 3);
  std::vector<Term> targets;
  std::size_t k = 0;
  for (const auto& t : all_targets)
    if (t.depth() <= 2 || k++ % 7 == 0) targets.push_back(t);
  REQUIRE(targets.size() > 1500);

  std::size_t agree = 0, derivable = 0, cases = 0;
  for (unsigned mask = 1; mask < (1u << pool.size()); ++mask) {
    if (__builtin_popcount(mask) > 6) continue;
    std::vector<Term> atoms;
    for (std::size_t j = 0; j < pool.size(); ++j)
      if (mask & (1u << j)) atoms.push_back(pool[j]);
    auto buildable = oracle::enumerate(atoms, 3);
    auto base = kb_of(atoms);
    saturate(base);
    for (const auto& t : targets) {
      ++cases;
      bool want = buildable.count(t) > 0;
      bool got = is_derivable(base, t);
      if (want == got) ++agree;
      else FAIL_CHECK("disagreement on " << render_term(t));
      if (t.depth() <= 2 && (t.depth() == 1 || k++ % 3 == 0)) CHECK(oracle::closure_contains(atoms, t) == want);
      if (got) {
        ++derivable;
        auto copy = base;
        auto d = derive(copy, t);
        REQUIRE(d.derivable);
        auto rebuilt = oracle::replay(copy);
        CHECK(rebuilt.at(d.root) == t);
      }
    }
  }
  MESSAGE(cases << " cases, " << derivable << " derivable");
  CHECK(agree == cases);
}

// Random knowledge bases with composite messages exercise the analysis rules.
TEST_CASE("property: random knowledge bases agree with the closure oracle") {
  std::mt19937_64 rng(99);
  int derivable = 0;
  for (int round = 0; round < 400; ++round) {
    std::vector<Term> terms;
    int n = 2 + static_cast<int>(rng() % 5);
    for (int j = 0; j < n; ++j) terms.push_back(testgen::random_term(rng, 3));
    if (rng() % 2) terms.push_back(Term::inv(testgen::random_pubkey(rng).kind() == TermKind::Inv
                                                 ? Term::atom("ka", Sort::PubKey)
                                                 : Term::atom("kb", Sort::PubKey)));
    auto kb = kb_of(terms);
    saturate(kb);
    check_index_discipline(kb);
    for (int q = 0; q < 20; ++q) {
      Term target = q < 5 ? testgen::random_atom(rng) : testgen::random_term(rng, 3);
      bool want = oracle::closure_contains(terms, target);
      INFO(render_term(target));
      CHECK(is_derivable(kb, target) == want);
      if (want) {
        ++derivable;
        auto copy = kb;
        auto d = derive(copy, target);
        REQUIRE(d.derivable);
        auto rebuilt = oracle::replay(copy);
        CHECK(rebuilt.at(d.root) == target);
        check_index_discipline(copy);
      }
    }
    // every saturated entry is rebuilt exactly from the initial knowledge
    auto rebuilt = oracle::replay(kb);
    for (const auto& [idx, e] : kb.entries()) CHECK(rebuilt.at(idx) == e.term);
  }
  CHECK(derivable > 100);
}

TEST_CASE("property: saturation is monotone and idempotent") {
  std::mt19937_64 rng(7);
  for (int round = 0; round < 200; ++round) {
    std::vector<Term> terms;
    for (int j = 0; j < 4; ++j) terms.push_back(testgen::random_term(rng, 3));
    auto small = kb_of(terms);
    saturate(small);
    auto extra = terms;
    extra.push_back(testgen::random_term(rng, 3));
    auto big = kb_of(extra);
    saturate(big);
    for (const auto& [idx, e] : small.entries()) CHECK(big.find(e.term));
    auto snapshot = small.size();
    CHECK_FALSE(saturate(small).changed());
    CHECK(small.size() == snapshot);
  }
}
