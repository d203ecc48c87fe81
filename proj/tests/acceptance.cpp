// Acceptance checks, one PASS/FAIL line per criterion. Runtime limits are pinned here.

#include <chrono>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include "dyattack/simulator.hpp"
#include "fixtures.hpp"
#include "harness.hpp"
#include "oracle/sweep.hpp"
#include "scripted.hpp"

using namespace dyattack;
using Clock = std::chrono::steady_clock;

namespace {

constexpr double kGoldenLimit = 1.0;        // s
constexpr double kSweepLimit = 60.0;        // s, whole sweep
constexpr double kRenegotiationLimit = 5.0;  // s, per run
constexpr double kInteropLimit = 2.0;       // s, per run

int failures = 0;

struct Check {
  std::vector<std::string> problems;
  void expect(bool ok, const std::string& what) {
    if (!ok) problems.push_back(what);
  }
};

void report(int n, const std::string& title, const Check& c, double seconds, const std::string& note = {}) {
  bool ok = c.problems.empty();
  if (!ok) ++failures;
  std::ostringstream line;
  line << (ok ? "PASS " : "FAIL ") << n << " " << title << " (" << std::fixed << std::setprecision(3) << seconds << " s";
  if (!note.empty()) line << ", " << note;
  line << ")";
  std::cout << line.str() << "\n";
  for (const auto& p : c.problems) std::cout << "     - " << p << "\n";
}

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Scenario compiled(const ProtocolModel& m, const char* trace) {
  return compile(parse_trace(fixtures::read(std::string("traces/") + trace), m.sorts, m.intruder), m);
}

void golden_scenario() {
  Check c;
  auto t0 = Clock::now();
  auto base = fixtures::model("nspk");
  auto m = apply_mutation(base, find_mutation_point(base, "A.3.Na"));
  auto s = compiled(m, "nspk-nonce.trace");
  double secs = since(t0);

  const std::vector<std::string> iknown = {"start", "a", "b", "ka", "kb", "ki", "inv(ki)", "i"};
  c.expect(s.initial.size() == iknown.size(), "iknown block has " + std::to_string(s.initial.size()) + " entries");
  for (std::size_t i = 0; i < iknown.size() && i < s.initial.size(); ++i)
    c.expect(s.initial[i].first == static_cast<int>(i) && render_term(s.initial[i].second) == iknown[i],
             "iknown entry " + std::to_string(i));

  // (action, index, term) per step
  std::vector<std::string> io;
  std::multiset<std::string> recipes;
  for (const auto& st : s.steps) {
    if (st.action == ActionKind::Send) io.push_back("!" + std::to_string(st.index) + "=" + render_term(*st.term));
    if (st.action == ActionKind::Receive) io.push_back("?" + std::to_string(st.index) + "=" + render_term(*st.term));
    for (const auto& [idx, r] : st.recipes) {
      // generated nonces are compared without their step number: step placement is normalized
      std::string rr = r.kind == RecipeKind::GeneratedNonceAt ? "generated" : render_recipe(r);
      if (r.kind != RecipeKind::ReceivedAt) recipes.insert(std::to_string(idx) + "=" + rr);
    }
  }
  std::vector<std::string> want_io = {"!0=start", "?8=crypt(kb,pair(Na,a))", "!11=crypt(ka,pair(Na,pair(Nb,b)))",
                                      "?16=crypt(kb,Nb)"};
  c.expect(io == want_io, "send/receive terms differ");
  std::multiset<std::string> want = {"13=generated", "15=generated", "14=pair(15,2)",
                                     "12=pair(13,14)", "11=crypt(3,12)", "16=crypt(4,15)"};
  c.expect(recipes == want, "recipe multiset differs");
  c.expect(!s.steps.empty() && s.steps.back().action == ActionKind::Finish, "no terminal finish()");
  c.expect(render_scenario(s) == fixtures::read("scenarios/nspk-nonce.scen"), "differs from the golden file");
  c.expect(secs < kGoldenLimit, "too slow");
  report(1, "golden scenario reproduction", c, secs);
}

void derivation_oracle() {
  Check c;
  auto t0 = Clock::now();
  auto st = oracle::sweep(6, [](const Term&) { return true; });
  double secs = since(t0);
  c.expect(st.agree == st.cases, std::to_string(st.cases - st.agree) + " disagreements");
  for (const auto& d : st.disagreements) c.expect(false, "disagreement on " + d);
  c.expect(st.replayed == st.derivable, std::to_string(st.derivable - st.replayed) + " recipes do not rebuild their target");
  c.expect(secs < kSweepLimit, "too slow");
  report(2, "derivation oracle equivalence", c, secs,
         std::to_string(st.cases) + " cases, " + std::to_string(st.derivable) + " derivable");
}

void symbolic_concrete() {
  Check c;
  auto t0 = Clock::now();
  std::size_t slots = 0;
  struct Bundled {
    const char* model;
    const char* scen;
  };
  for (auto b : {Bundled{"nspk", "nspk-nonce.scen"}, Bundled{"tls", "tls-renegotiation.scen"}}) {
    auto s = parse_scenario(fixtures::read(std::string("scenarios/") + b.scen));
    auto sym = evaluate_symbolic(s);
    TransparentSuite suite(7);
    Encoder enc(suite);
    scripted::EchoTransport net(s, sym, enc);
    DataStore store;
    auto rep = execute(s, enc, net, {}, &store);
    c.expect(rep.status == ExecStatus::Finished, std::string(b.scen) + ": " + rep.reason);
    for (const auto& [idx, term] : sym) {
      ++slots;
      c.expect(store.has(idx) && enc.encode(term) == store.read(idx),
               std::string(b.scen) + ": index " + std::to_string(idx) + " differs");
    }
    c.expect(sym.size() == store.slots().size(), std::string(b.scen) + ": slot sets differ");
  }
  report(3, "symbolic/concrete agreement", c, since(t0), std::to_string(slots) + " indices");
}

void renegotiation() {
  Check c;
  auto s = parse_scenario(fixtures::read("scenarios/tls-renegotiation.scen"));
  RunOptions o;
  o.seed = 1;
  double worst = 0;
  auto timed = [&](const char* env) {
    auto t0 = Clock::now();
    auto rep = run_attack(load_environment(fixtures::path(std::string("configs/") + env)), s, o);
    worst = std::max(worst, since(t0));
    return rep;
  };
  auto on = timed("tls-renego-on.env");
  auto on2 = timed("tls-renego-on.env");
  auto off = timed("tls-renego-off.env");
  c.expect(on.validation.verdict == Verdict::Confirmed, "allow-renegotiation=true: " +
                                                             std::string(verdict_name(on.validation.verdict)));
  c.expect(off.validation.verdict == Verdict::Rejected, "allow-renegotiation=false: " +
                                                             std::string(verdict_name(off.validation.verdict)));
  c.expect(off.validation.pattern == "no renegotiation", "pattern '" + off.validation.pattern + "'");
  c.expect(on.log.export_text() == on2.log.export_text(), "repeated run logged different traffic");
  c.expect(worst < kRenegotiationLimit, "too slow");
  report(4, "end-to-end renegotiation finding", c, worst, "slowest run");
}

void mutant_divergence() {
  Check c;
  auto t0 = Clock::now();
  std::size_t points = 0;
  for (const char* name : {"nspk", "tls"}) {
    auto m = fixtures::model(name);
    for (const auto& p : list_mutation_points(m)) {
      ++points;
      auto out = harness::probe_point(m, p);
      c.expect(harness::diverges(out, p), std::string(name) + " " + p.id() + ": no divergence (original " +
                                              std::string(role_status_name(out.original.status)) + ", mutant " +
                                              std::string(role_status_name(out.mutant.status)) + ")");
      auto diff = fixtures::token_diff(render_model(m), render_model(apply_mutation(m, p)));
      c.expect(diff == 1, std::string(name) + " " + p.id() + ": " + std::to_string(diff) + " tokens differ");
    }
  }
  report(5, "mutant divergence suite", c, since(t0), std::to_string(points) + " points");
}

void honest_interop() {
  Check c;
  double worst = 0;
  for (const char* name : {"nspk", "nsl", "tls"}) {
    auto m = fixtures::model(name);
    auto t0 = Clock::now();
    auto a = harness::run_pair(m, 5);
    worst = std::max(worst, since(t0));
    auto b = harness::run_pair(m, 5);
    c.expect(a.init.status == RoleStatus::Completed && a.resp.status == RoleStatus::Completed,
             std::string(name) + ": " + a.init.detail + " / " + a.resp.detail);
    c.expect(a.to_init == b.to_init && a.to_resp == b.to_resp, std::string(name) + ": traffic not seed-stable");
    if (std::string(name) == "tls") {
      Term fin = parse_term("hash(pair(prf(pair(PMS,pair(Na,Nb))),pair(A,pair(B,pair(Na,pair(Pa,Sid))))))", m.sorts);
      bool equal = a.init_state.values.count(fin) && a.resp_state.values.count(fin) &&
                   a.init_state.values.at(fin) == a.resp_state.values.at(fin);
      c.expect(equal, "tls: Finished values differ");
    }
  }
  c.expect(worst < kInteropLimit, "too slow");
  report(6, "honest interop", c, worst, "slowest run");
}

void algorithm_conformance() {
  Check c;
  auto t0 = Clock::now();
  auto s = parse_scenario(
      "sorts: agent: a, i; nonce: N\n"
      "Step -1:\n0 = start = iknown\n1 = a = iknown\n"
      "Step 0:\n?2 = N\n2=\"received at step:0\"\n"
      "Step 1:\n!3 = pair(N,a)\n3=pair(2,1)\n"
      "Step 2:\nfinish()\n");
  TransparentSuite suite(7);
  Encoder enc(suite);
  scripted::QueueTransport net({suite.nonce()});
  auto rep = execute(s, enc, net);
  c.expect(rep.status == ExecStatus::Finished, "did not terminate on finish()");
  c.expect(rep.counters.send_fetches == 1, "send fetches " + std::to_string(rep.counters.send_fetches));
  c.expect(rep.counters.receive_stores == 1, "receive stores " + std::to_string(rep.counters.receive_stores));
  c.expect(rep.counters.primitive_calls == 1, "primitive calls " + std::to_string(rep.counters.primitive_calls));
  c.expect(rep.counters.finishes == 1, "finishes " + std::to_string(rep.counters.finishes));
  c.expect(net.sent.size() == 1, "frames sent " + std::to_string(net.sent.size()));
  report(7, "execution algorithm conformance", c, since(t0));
}

}  // namespace

int main() {
  golden_scenario();
  derivation_oracle();
  symbolic_concrete();
  renegotiation();
  mutant_divergence();
  honest_interop();
  algorithm_conformance();
  return failures == 0 ? 0 : 1;
}
