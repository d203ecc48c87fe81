#include <thread>

#include "doctest.h"
#include "dyattack/honest.hpp"
#include "fixtures.hpp"
#include "harness.hpp"

using namespace dyattack;

namespace {

const char* kFinished =
    "hash(pair(prf(pair(PMS,pair(Na,Nb))),pair(A,pair(B,pair(Na,pair(Pa,Sid))))))";

}  // namespace

TEST_CASE("honest interop on every bundled model") {
  for (const char* name : {"nspk", "nsl", "tls"}) {
    auto m = fixtures::model(name);
    auto run = harness::run_pair(m, 5);
    INFO(name << ": " << run.init.detail << " / " << run.resp.detail);
    CHECK(run.init.status == RoleStatus::Completed);
    CHECK(run.resp.status == RoleStatus::Completed);
  }
}

TEST_CASE("tls: Finished values agree, with and without optional messages") {
  auto m = fixtures::model("tls");
  Term fin = parse_term(kFinished, m.sorts);
  for (auto opts : {std::map<std::string, bool>{}, harness::all_options_on(m)}) {
    auto run = harness::run_pair(m, 3, opts);
    REQUIRE(run.init.status == RoleStatus::Completed);
    REQUIRE(run.resp.status == RoleStatus::Completed);
    REQUIRE(run.init_state.values.count(fin));
    REQUIRE(run.resp_state.values.count(fin));
    CHECK(run.init_state.values.at(fin) == run.resp_state.values.at(fin));
    // the client's master secret input is the server's too
    Term pms = parse_term("PMS", m.sorts);
    CHECK(run.init_state.bindings.at(pms) == run.resp_state.bindings.at(pms));
  }
}

TEST_CASE("honest runs are seed-stable") {
  auto m = fixtures::model("tls");
  auto a = harness::run_pair(m, 8), b = harness::run_pair(m, 8), c = harness::run_pair(m, 9);
  CHECK(a.to_resp == b.to_resp);
  CHECK(a.to_init == b.to_init);
  CHECK(a.to_resp != c.to_resp);
}

TEST_CASE("a role with no transitions completes at once") {
  auto m = fixtures::model("nspk");
  const Role* env = m.find_role("environment");
  REQUIRE(env);
  scripted::QueueTransport net({});
  TransparentSuite suite(1);
  auto r = run_role(m, *env, net, suite);
  CHECK(r.status == RoleStatus::Completed);
  CHECK(net.sent.empty());
}

TEST_CASE("wrong nonce: original responder alerts, nonce mutant proceeds") {
  auto m = fixtures::model("nspk");
  auto p = find_mutation_point(m, "B.3.Nb");
  auto mutant = apply_mutation(m, p);
  TransparentSuite enc_suite(2);
  Encoder enc(enc_suite);
  auto first = enc.encode(parse_term("crypt(kb,pair(Na,a))", m.sorts));
  auto wrong = enc.encode(parse_term("crypt(kb,Na)", m.sorts));  // B expects its own Nb back
  for (bool mutated : {false, true}) {
    const auto& model = mutated ? mutant : m;
    scripted::QueueTransport net({first, wrong});
    TransparentSuite suite(2, "B");
    auto r = run_role(model, *model.find_role("B"), net, suite);
    if (mutated) {
      CHECK(r.status == RoleStatus::Completed);
      CHECK(net.sent.size() == 1);
    } else {
      CHECK(r.status == RoleStatus::ProtocolError);
      CHECK(r.alert == alert::kCheckFailed);
      CHECK(r.transition == 3);
      REQUIRE(net.sent.size() == 2);
      CHECK(net.sent.back() == alert_frame(alert::kCheckFailed));
    }
  }
}

TEST_CASE("alerts: decode error, wrong shape, timeout, peer alert") {
  auto m = fixtures::model("nspk");
  const Role& b = *m.find_role("B");
  TransparentSuite suite(1, "B");
  {
    // PAIR holding a single frame
    scripted::QueueTransport net({from_hex("1000000006010000000161")});
    auto r = run_role(m, b, net, suite);
    CHECK(r.alert == alert::kDecode);
  }
  {
    scripted::QueueTransport net({name_frame("hello")});
    auto r = run_role(m, b, net, suite);
    CHECK(r.status == RoleStatus::ProtocolError);
    CHECK(r.alert == alert::kUnexpected);
  }
  {
    scripted::QueueTransport net({});
    auto r = run_role(m, b, net, suite);
    CHECK(r.status == RoleStatus::Timeout);
    CHECK(r.transition == 1);
  }
  {
    scripted::QueueTransport net({alert_frame(0x28)});
    auto r = run_role(m, b, net, suite);
    CHECK(r.status == RoleStatus::ProtocolError);
    CHECK(r.alert_from_peer);
    CHECK(net.sent.empty());
  }
}

TEST_CASE("session opener and flights") {
  auto m = fixtures::model("nspk");
  TransparentSuite enc_suite(4);
  Encoder enc(enc_suite);
  // the opener is dropped by a responder
  scripted::QueueTransport net({name_frame("start"), enc.encode(parse_term("crypt(kb,pair(Na,a))", m.sorts))});
  TransparentSuite suite(4, "B");
  RoleState st;
  auto r = run_role(m, *m.find_role("B"), net, suite, {}, &st);
  CHECK(r.transition == 3);  // got past 1 and 2, then waited for 3
  CHECK(r.status == RoleStatus::Timeout);
  CHECK(st.pc == 3);
}

TEST_CASE("property: every mutation point has a diverging probe") {
  for (const char* name : {"nspk", "nsl", "tls"}) {
    auto m = fixtures::model(name);
    for (const auto& p : list_mutation_points(m)) {
      auto out = harness::probe_point(m, p);
      INFO(name << " " << p.id() << ": original " << role_status_name(out.original.status) << " at "
                << out.original.transition << " (" << out.original.detail << "), mutant "
                << role_status_name(out.mutant.status) << " at " << out.mutant.transition << " ("
                << out.mutant.detail << ")");
      CHECK(harness::diverges(out, p));
      CHECK(out.original.alert == alert::kCheckFailed);
    }
  }
}

TEST_CASE("probe replaces exactly the addressed value") {
  auto m = fixtures::model("nspk");
  TransparentSuite suite(1);
  Encoder enc(suite);
  auto pat = parse_term("crypt(kb,pair(Na,a))", m.sorts);
  Bytes honest = enc.encode(pat);
  Bytes probe = make_probe(honest, pat, {1, 1}, MutationKind::AgentId);
  Bytes expect = enc.encode(parse_term("crypt(kb,pair(Na,mallory))", SortTable{{"mallory", Sort::Agent},
                                                                               {"Na", Sort::Nonce},
                                                                               {"kb", Sort::PubKey}}));
  CHECK(probe == expect);
}

TEST_CASE("tls server renegotiation: allowed answers, refused alerts") {
  auto m = fixtures::model("tls");
  auto [client_role, server_role] = harness::parties(m);
  (void)server_role;
  for (bool allow : {true, false}) {
    auto [tc, ts] = make_pipe();
    TransparentSuite sc(6, "client"), ss(6, "server");
    RoleResult server;
    std::thread worker([&, allow, t = ts.get()] { server = run_tls_server(m, allow, *t, ss); });
    RoleOptions oc;
    oc.self_start = true;
    RoleState cst;
    auto client = run_role(m, *client_role, *tc, sc, oc, &cst);
    REQUIRE(client.status == RoleStatus::Completed);
    // the client asks again under its session key
    Term ck = parse_term("keygen(A,Na,Nb,prf(pair(PMS,pair(Na,Nb))))", m.sorts);
    Bytes hello = make_frame(Tag::Pair, concat(name_frame("A"), make_frame(Tag::Pair, concat(sc.nonce(), make_frame(Tag::Pair, concat(name_frame("Sid"), name_frame("Pa2")))))));
    tc->send(sc.scrypt(cst.values.at(ck), hello));
    auto reply = tc->receive(std::chrono::milliseconds(1000));
    worker.join();
    REQUIRE(reply);
    if (allow) {
      CHECK(whole_frame(*reply).tag == Tag::SCrypt);
      CHECK(server.status == RoleStatus::Completed);
      CHECK(server.detail == "renegotiated");
    } else {
      CHECK(*reply == alert_frame(alert::kNoRenegotiation));
      CHECK(server.status == RoleStatus::ProtocolError);
      CHECK(server.alert == alert::kNoRenegotiation);
    }
  }
}
