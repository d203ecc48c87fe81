#include <functional>
#include <random>

#include "doctest.h"
#include "dyattack/scenario.hpp"
#include "fixtures.hpp"
#include "oracle/closure_oracle.hpp"

using namespace dyattack;

namespace {

AttackTrace trace_for(const ProtocolModel& m, const std::string& file) {
  return parse_trace(fixtures::read("traces/" + file), m.sorts, m.intruder);
}

std::vector<std::string> lines_of(const ScenarioStep& st) {
  std::vector<std::string> out;
  for (const auto& [i, r] : st.recipes) out.push_back(std::to_string(i) + "=" + render_recipe(r));
  return out;
}

}  // namespace

TEST_CASE("parse_trace: nonce replay trace") {
  auto m = fixtures::model("nspk");
  auto t = trace_for(m, "nspk-nonce.trace");
  REQUIRE(t.steps.size() == 4);
  CHECK(t.intruder == "i");
  const char* senders[] = {"i", "a", "i", "a"};
  for (int k = 0; k < 4; ++k) {
    CHECK(t.steps[k].sender.name() == senders[k]);
    CHECK(t.steps[k].receiver.name() == (k % 2 ? "i" : "a"));
  }
  CHECK(render_term(t.steps[0].message) == "start");
  CHECK(render_term(t.steps[2].message) == "crypt(ka,pair(Na,pair(Nb,b)))");
}

TEST_CASE("parse_trace: renegotiation trace") {
  auto m = fixtures::model("tls");
  auto t = trace_for(m, "tls-renegotiation.trace");
  REQUIRE(t.steps.size() == 6);
  CHECK(t.intruder == "I");
  CHECK(t.steps[5].message == parse_term("crypt((I.Ni.Sid.Pi2), keygen(I,Ni,Nb,prf(PMS.Ni.Nb)))", m.sorts));
  CHECK(t.steps[5].message.kind() == TermKind::SCrypt);
  CHECK(t.intruder_sends(3));
  CHECK_FALSE(t.intruder_sends(4));
}

TEST_CASE("parse_trace: arrows and errors") {
  auto m = fixtures::model("nspk");
  auto t = parse_trace("i → a : start\na→i: crypt(kb,Na)\n", m.sorts, "i");
  CHECK(t.steps.size() == 2);
  CHECK_THROWS_AS(parse_trace("", m.sorts, "i"), ParseError);
  CHECK_THROWS_AS(parse_trace("# nothing\n", m.sorts, "i"), ParseError);
  CHECK_THROWS_AS(parse_trace("a -> b : start\n", m.sorts, "i"), ParseError);
  CHECK_THROWS_AS(parse_trace("i -> zz : start\n", m.sorts, "i"), ParseError);
  CHECK_THROWS_AS(parse_trace("i -> ka : start\n", m.sorts, "i"), ParseError);
  CHECK_THROWS_AS(parse_trace("i -> a start\n", m.sorts, "i"), ParseError);
  CHECK_THROWS_AS(parse_trace("i -> a : start\n", m.sorts, ""), ParseError);
  try {
    parse_trace("i -> a : start\n\ni -> a : pair(a,\n", m.sorts, "i");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("compile: nonce replay against the mutant") {
  auto m = fixtures::model("nspk");
  auto s = compile(trace_for(m, "nspk-nonce.trace"), m);
  MESSAGE(render_scenario(s));
  REQUIRE(s.initial.size() == 8);
  CHECK(render_term(s.initial[6].second) == "inv(ki)");
  REQUIRE(s.steps.size() == 5);
  CHECK(s.steps[0].action == ActionKind::Send);
  CHECK(s.steps[0].index == 0);
  CHECK(s.steps[0].recipes.empty());
  CHECK(s.steps[1].action == ActionKind::Receive);
  CHECK(s.steps[1].index == 8);
  CHECK(lines_of(s.steps[1]) == std::vector<std::string>{"8=\"received at step:1\""});
  CHECK(s.steps[2].index == 11);
  CHECK(lines_of(s.steps[2]) == std::vector<std::string>{"13=\"generated nonce at step:2\"",
                                                         "15=\"generated nonce at step:2\"", "14=pair(15,2)",
                                                         "12=pair(13,14)", "11=crypt(3,12)"});
  CHECK(s.steps[3].index == 16);
  CHECK(lines_of(s.steps[3]) == std::vector<std::string>{"16=\"received at step:3\"", "16=crypt(4,15)"});
  CHECK(s.steps[4].action == ActionKind::Finish);

  auto text = render_scenario(s);
  CHECK(text.find("0 = start = iknown\n") != std::string::npos);
  CHECK(text.find("13=\"generated nonce at step:2\"") != std::string::npos);
  CHECK(text.find("!0 = start\n") != std::string::npos);
  CHECK(text.find("?8 = crypt(kb,pair(Na,a))\n") != std::string::npos);
  CHECK(text.find("Step 4:\nfinish()\n") != std::string::npos);
}

TEST_CASE("compile matches the checked-in golden scenarios") {
  struct Case {
    const char* model;
    const char* trace;
    const char* golden;
  };
  for (auto c : {Case{"nspk", "nspk-nonce.trace", "scenarios/nspk-nonce.scen"},
                 Case{"tls", "tls-renegotiation.trace", "scenarios/tls-renegotiation.scen"}}) {
    auto m = fixtures::model(c.model);
    auto s = compile(trace_for(m, c.trace), m);
    CHECK(render_scenario(s) == fixtures::read(c.golden));
  }
}

TEST_CASE("compile: renegotiation generates the intruder's nonces") {
  auto m = fixtures::model("tls");
  auto s = compile(trace_for(m, "tls-renegotiation.trace"), m);
  MESSAGE(render_scenario(s));
  REQUIRE(s.steps.size() == 7);
  int generated = 0;
  for (const auto& [i, r] : s.steps[3].recipes) generated += r.kind == RecipeKind::GeneratedNonceAt;
  CHECK(generated == 1);  // PMS
  for (const auto& [i, r] : s.steps[1].recipes) generated += r.kind == RecipeKind::GeneratedNonceAt;
  CHECK(generated == 2);  // and Ni
  CHECK(s.steps[4].action == ActionKind::Receive);
  // The server's Finished is fully rebuilt by the intruder and compared.
  CHECK(s.steps[4].recipes.back().first == s.steps[4].index);
  CHECK(s.steps[4].recipes.back().second.kind == RecipeKind::SCrypt);
  CHECK_NOTHROW(evaluate_symbolic(s));
}

TEST_CASE("compile: a trace that only sends start") {
  auto m = fixtures::model("nspk");
  auto s = compile(parse_trace("i -> a : start\n", m.sorts, "i"), m);
  REQUIRE(s.steps.size() == 2);
  CHECK(s.steps[0].index == 0);
  CHECK(s.steps[0].recipes.empty());
  CHECK(s.finished());
}

TEST_CASE("compile: underivable names are reported with their step") {
  auto m = fixtures::model("nspk");
  auto tr = parse_trace("i -> a : start\ni -> b : crypt(inv(ka),a)\n", m.sorts, "i");
  try {
    compile(tr, m);
    FAIL("expected a compile error");
  } catch (const CompileError& e) {
    CHECK(e.step() == 1);
    REQUIRE(e.missing().size() == 1);
    CHECK(render_term(e.missing()[0]) == "inv(ka)");
  }
}

TEST_CASE("render/parse round trip") {
  for (const char* name : {"scenarios/nspk-nonce.scen", "scenarios/tls-renegotiation.scen"}) {
    auto text = fixtures::read(name);
    auto s = parse_scenario(text);
    CHECK(render_scenario(s) == text);
  }
}

TEST_CASE("parse_scenario rejects broken files") {
  const std::string head = "sorts: agent: a; nonce: N\nStep -1:\n0 = start = iknown\n1 = a = iknown\n";
  CHECK_NOTHROW(parse_scenario(head + "Step 0:\n!0 = start\nStep 1:\nfinish()\n"));
  CHECK_THROWS_AS(parse_scenario(""), ParseError);
  CHECK_THROWS_AS(parse_scenario(head), ParseError);                                     // no finish
  CHECK_THROWS_AS(parse_scenario(head + "Step 0:\n!0 = zz\nStep 1:\nfinish()\n"), ParseError);
  CHECK_THROWS_AS(parse_scenario(head + "Step 0:\n!3 = pair(a,a)\n3=pair(1,9)\nStep 1:\nfinish()\n"),
                  std::invalid_argument);  // index used before definition
  CHECK_THROWS_AS(parse_scenario(head + "Step 0:\n?2 = N\n2=\"received at step:5\"\nStep 1:\nfinish()\n"),
                  std::invalid_argument);  // wrong step number
  CHECK_THROWS_AS(parse_scenario(head + "Step 0:\n!2 = N\n2=\"generated nonce at step:0\"\n"
                                        "2=\"generated nonce at step:0\"\nStep 1:\nfinish()\n"),
                  std::invalid_argument);  // written twice
  CHECK_THROWS_AS(parse_scenario(head + "Step 1:\n!0 = start\nStep 2:\nfinish()\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_scenario(head + "Step 0:\nfinish()\nStep 1:\nfinish()\n"), ParseError);
}

// Random traces over the nspk vocabulary: every compiled scenario must reproduce its sends
// symbolically, keep step alignment, compile deterministically and survive a text round
// trip. Failures must name atoms the oracle also cannot derive.
TEST_CASE("property: compiled scenarios are executable") {
  auto m = fixtures::model("nspk");
  std::mt19937_64 rng(2024);
  const std::vector<std::string> atoms = {"a", "b", "i", "ka", "kb", "ki", "Na", "Nb", "start"};
  std::function<std::string(int)> gen = [&](int depth) -> std::string {
    if (depth <= 1 || rng() % 3 == 0) return atoms[rng() % atoms.size()];
    switch (rng() % 4) {
      case 0: return "pair(" + gen(depth - 1) + "," + gen(depth - 1) + ")";
      case 1: {
        static const char* keys[] = {"ka", "kb", "inv(ki)", "inv(ka)"};
        return std::string("crypt(") + keys[rng() % 4] + "," + gen(depth - 1) + ")";
      }
      case 2: return "hash(" + gen(depth - 1) + ")";
      default: return "crypt(ki," + gen(depth - 1) + ")";
    }
  };
  int compiled = 0, failed = 0;
  for (int round = 0; round < 300; ++round) {
    std::string src = "i -> a : start\n";
    int n = 1 + static_cast<int>(rng() % 5);
    for (int k = 0; k < n; ++k) src += (rng() % 2 ? "i -> a : " : "a -> i : ") + gen(3) + "\n";
    auto tr = parse_trace(src, m.sorts, "i");
    INFO(src);
    try {
      auto s = compile(tr, m);
      ++compiled;
      CHECK(s.action_count() == tr.steps.size());
      CHECK(s.finished());
      CHECK_NOTHROW(evaluate_symbolic(s));
      CHECK_NOTHROW(validate_scenario(s));
      auto text = render_scenario(s);
      CHECK(render_scenario(compile(tr, m)) == text);
      CHECK(render_scenario(parse_scenario(text)) == text);
    } catch (const CompileError& e) {
      ++failed;
      // Replay what the intruder had: initial knowledge plus everything received so far.
      std::vector<Term> known(m.intruder_knowledge.begin(), m.intruder_knowledge.end());
      for (int k = 0; k < e.step(); ++k)
        if (!tr.intruder_sends(k)) known.push_back(tr.steps[k].message);
      for (const auto& miss : e.missing()) {
        CHECK(miss.sort() != Sort::Nonce);
        CHECK_FALSE(oracle::closure_contains(known, miss));
      }
    }
  }
  CHECK(compiled > 50);
  CHECK(failed > 10);
}
