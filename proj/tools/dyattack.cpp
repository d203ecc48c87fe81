// dyattack: mutate models, compile attack traces, run them against live targets.

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "dyattack/model.hpp"
#include "dyattack/scenario.hpp"
#include "dyattack/simulator.hpp"

using namespace dyattack;

namespace {

enum Exit { kConfirmed = 0, kRejected = 1, kBadPoint = 2, kCompileFailed = 3, kInconclusive = 4 };

void write_out(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

int cmd_mutate(const std::string& model_path, const std::string& point, bool all, const std::string& out) {
  auto m = load_model(model_path);
  if (point.empty() && !all) {
    for (const auto& p : list_mutation_points(m))
      std::cout << p.id() << "  " << mutation_kind_name(p.kind) << "\n";
    return 0;
  }
  if (all) {
    std::string dir = out.empty() ? "." : out;
    for (const auto& p : list_mutation_points(m)) {
      std::string file = dir + "/" + m.name + "." + p.id() + ".model";
      for (auto& c : file)
        if (c == '#') c = '_';
      write_out(file, render_model(apply_mutation(m, p)));
      std::cout << file << "\n";
    }
    return 0;
  }
  MutationPoint p;
  try {
    p = find_mutation_point(m, point);
  } catch (const ModelError& e) {
    std::cerr << "dyattack: " << e.what() << "\n";
    return kBadPoint;
  }
  write_out(out, render_model(apply_mutation(m, p)));
  return 0;
}

int cmd_compile(const std::string& model_path, const std::string& trace_path, const std::string& out) {
  auto m = load_model(model_path);
  auto tr = load_trace(trace_path, m.sorts, m.intruder);
  try {
    write_out(out, render_scenario(compile(tr, m)));
  } catch (const CompileError& e) {
    std::cerr << "dyattack: attack not executable: " << e.what() << "\n";
    return kCompileFailed;
  }
  return 0;
}

int exit_for(Verdict v) {
  switch (v) {
    case Verdict::Confirmed: return kConfirmed;
    case Verdict::Rejected: return kRejected;
    case Verdict::Inconclusive: return kInconclusive;
  }
  return kInconclusive;
}

// Config paths that do not exist as given are looked up in $DYATTACK_CONFIG_DIR.
std::string config_path(const std::string& p) {
  if (std::filesystem::exists(p)) return p;
  if (const char* dir = std::getenv("DYATTACK_CONFIG_DIR")) {
    std::string alt = std::string(dir) + "/" + p;
    if (std::filesystem::exists(alt)) return alt;
  }
  return p;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::map<std::string, bool> parse_option_flags(const std::vector<std::string>& flags) {
  std::map<std::string, bool> out;
  for (const auto& f : flags) {
    auto eq = f.find('=');
    std::string k = f.substr(0, eq), v = eq == std::string::npos ? "on" : f.substr(eq + 1);
    if (v != "on" && v != "off") throw std::invalid_argument("option " + k + " must be on or off");
    out[k] = v == "on";
  }
  return out;
}

struct SuiteArgs {
  std::string suite = "transparent";
  std::uint64_t seed = 1;
};

void print_report(const RunReport& rep) {
  std::cout << "verdict: " << verdict_name(rep.validation.verdict);
  if (!rep.validation.pattern.empty()) std::cout << " (" << rep.validation.pattern << ")";
  std::cout << "\nexecution: " << exec_status_name(rep.execution.status);
  if (rep.execution.step >= 0) std::cout << " at step " << rep.execution.step;
  if (!rep.execution.reason.empty()) std::cout << ": " << rep.execution.reason;
  std::cout << "\n";
  for (const auto& [name, st] : rep.agents) {
    std::cout << "agent " << name << ": " << st.state << " at transition " << st.result.transition;
    if (!st.result.detail.empty()) std::cout << " (" << st.result.detail << ")";
    std::cout << "\n";
  }
  if (!rep.error.empty()) std::cout << "error: " << rep.error << "\n";
}

int cmd_run(const std::string& env_path, const std::string& scen_path, const std::string& model_path,
            const SuiteArgs& sa, const std::string& log_path) {
  auto cfg = load_environment(config_path(env_path));
  auto s = load_scenario(scen_path);
  RunOptions o;
  o.suite = sa.suite;
  o.seed = sa.seed;
  if (!model_path.empty()) o.model = load_model(model_path);
  auto rep = run_attack(cfg, s, o);
  print_report(rep);
  if (!log_path.empty()) write_out(log_path, rep.log.export_text());
  return exit_for(rep.validation.verdict);
}

struct CampaignJob {
  std::string variant;  // "original" or a mutation point id
  ProtocolModel model;
  std::string trace_path;
};

int cmd_campaign(const std::string& env_path, const std::string& model_path, const std::vector<std::string>& traces,
                 const SuiteArgs& sa, const std::string& out_dir, int jobs) {
  auto cfg = load_environment(config_path(env_path));
  auto base = load_model(model_path);
  std::vector<CampaignJob> work;
  std::vector<std::pair<std::string, ProtocolModel>> variants{{"original", base}};
  for (const auto& p : list_mutation_points(base)) variants.emplace_back(p.id(), apply_mutation(base, p));
  for (const auto& t : traces)
    for (const auto& [id, m] : variants) work.push_back({id, m, t});
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  std::vector<std::string> lines(work.size());
  std::vector<std::string> verdicts(work.size());
  std::vector<int> codes(work.size(), kInconclusive);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < work.size();) {
      const auto& job = work[i];
      std::string stem = std::filesystem::path(job.trace_path).stem().string();
      std::string verdict, detail, log_file = "-";
      try {
        auto tr = load_trace(job.trace_path, job.model.sorts, job.model.intruder);
        check_trace_agents(cfg, tr);
        Scenario s = compile(tr, job.model);
        RunOptions o;
        o.suite = sa.suite;
        o.seed = sa.seed;
        o.model = job.model;
        auto rep = run_attack(cfg, s, o);
        verdict = verdict_name(rep.validation.verdict);
        detail = !rep.validation.pattern.empty() ? rep.validation.pattern
                 : !rep.error.empty()            ? rep.error
                                                 : std::string(exec_status_name(rep.execution.status));
        codes[i] = exit_for(rep.validation.verdict);
        if (!out_dir.empty()) {
          std::string v = job.variant;
          for (auto& c : v)
            if (c == '#') c = '_';
          log_file = out_dir + "/" + base.name + "." + v + "." + stem + ".log";
          write_out(log_file, rep.log.export_text());
        }
      } catch (const CompileError& e) {
        verdict = "compile-failed";
        detail = e.what();
        codes[i] = kCompileFailed;
      } catch (const std::exception& e) {
        verdict = "inconclusive";
        detail = e.what();
      }
      for (auto& c : detail)
        if (c == '|' || c == '\n') c = ' ';
      verdicts[i] = verdict;
      lines[i] = base.name + "|" + job.variant + "|" + stem + "|" + verdict + "|" + detail + "|" + log_file;
    }
  };
  std::vector<std::thread> pool;
  for (int j = 1; j < std::max(1, jobs); ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::string summary;
  std::map<std::string, int> counts;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    summary += lines[i] + "\n";
    ++counts[verdicts[i]];
  }
  for (const auto& [k, n] : counts) summary += "# " + k + " " + std::to_string(n) + "\n";
  std::cout << summary;
  if (!out_dir.empty()) write_out(out_dir + "/summary.txt", summary);
  bool any_confirmed = std::count(codes.begin(), codes.end(), kConfirmed) > 0;
  bool any_rejected = std::count(codes.begin(), codes.end(), kRejected) > 0;
  return any_confirmed ? kConfirmed : any_rejected ? kRejected : kInconclusive;
}

int cmd_validate(const std::string& env_path, const std::string& log_path) {
  auto cfg = load_environment(config_path(env_path));
  auto v = validate(TrafficLog::parse(read_file(log_path)), cfg);
  std::cout << verdict_name(v.verdict);
  if (!v.pattern.empty()) std::cout << " (" << v.pattern << ")";
  std::cout << "\n";
  return exit_for(v.verdict);
}

int cmd_serve(const std::string& model_path, const std::string& role, const std::string& listen,
              const std::vector<std::string>& option_flags, const std::string& renegotiation, const SuiteArgs& sa,
              int timeout_ms) {
  auto m = load_model(model_path);
  AgentEntry e;
  e.name = role;
  e.role = role;
  e.address = parse_endpoint(listen);
  e.has_address = true;
  e.options = parse_option_flags(option_flags);
  if (!renegotiation.empty()) e.allow_renegotiation = renegotiation == "on";
  AgentSetup setup;
  setup.suite = sa.suite;
  setup.seed = sa.seed;
  setup.step_timeout = std::chrono::milliseconds(timeout_ms);
  setup.accept_timeout = std::chrono::hours(24);
  auto h = spawn_agent(e, m, setup);
  std::cout << "serving " << m.name << " role " << role << " on " << h->endpoint().str() << std::endl;
  while (!h->wait(std::chrono::seconds(1))) {
  }
  auto st = h->status();
  std::cout << st.state << " at transition " << st.result.transition;
  if (!st.result.detail.empty()) std::cout << " (" << st.result.detail << ")";
  std::cout << "\n";
  return st.state == "completed" ? 0 : st.state == "protocol-error" ? 1 : kInconclusive;
}

int cmd_exec(const std::string& scen_path, const std::string& target, const std::string& env_path,
             const SuiteArgs& sa, int timeout_ms, int settle_ms) {
  auto s = load_scenario(scen_path);
  std::optional<EnvironmentConfig> cfg;
  if (!env_path.empty()) cfg = load_environment(config_path(env_path));
  auto suite = make_suite(sa.suite, sa.seed, "intruder");
  Encoder enc(*suite);
  SocketTransport net(connect_to(parse_endpoint(target), std::chrono::milliseconds(timeout_ms)));
  ExecutionOptions eo;
  eo.step_timeout = std::chrono::milliseconds(timeout_ms);
  if (cfg)
    eo.classify_error = [&](const Bytes& f) -> std::optional<std::string> {
      if (const auto* p = cfg->classify(f)) return p->description;
      return std::nullopt;
    };
  auto rep = execute(s, enc, net, eo);
  std::cout << exec_status_name(rep.status);
  if (rep.step >= 0) std::cout << " at step " << rep.step;
  if (!rep.reason.empty()) std::cout << ": " << rep.reason;
  std::cout << "\n";
  // the target's reaction to the last message
  if (rep.status == ExecStatus::Finished && eo.classify_error) {
    try {
      auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(settle_ms);
      while (std::chrono::steady_clock::now() < deadline) {
        auto f = net.receive(std::chrono::milliseconds(settle_ms));
        if (!f) break;
        if (auto err = eo.classify_error(*f)) {
          std::cout << "rejected after finish: " << *err << "\n";
          return kRejected;
        }
      }
    } catch (const ChannelClosed&) {
    }
  }
  switch (rep.status) {
    case ExecStatus::Finished: return kConfirmed;
    case ExecStatus::Rejected: return kRejected;
    default: return kInconclusive;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dolev-Yao attack scenarios against protocol implementations"};
  app.require_subcommand(1);

  std::string model, point, out, trace;
  bool all = false;

  auto* mutate = app.add_subcommand("mutate", "list mutation points or write a mutant model");
  mutate->add_option("model", model, "protocol model")->required()->check(CLI::ExistingFile);
  mutate->add_option("--point", point, "mutation point id, e.g. B.1.a");
  mutate->add_flag("--all", all, "write every single-point mutant into --out (a directory)");
  mutate->add_option("--out,-o", out, "output file (default stdout)");

  auto* comp = app.add_subcommand("compile", "compile an attack trace into a scenario");
  comp->add_option("model", model, "protocol model")->required()->check(CLI::ExistingFile);
  comp->add_option("trace", trace, "attack trace")->required()->check(CLI::ExistingFile);
  comp->add_option("--out,-o", out, "output file (default stdout)");

  SuiteArgs sa;
  auto suite_flags = [&](CLI::App* c) {
    c->add_option("--suite", sa.suite, "crypto suite")->check(CLI::IsMember({"transparent", "real"}));
    c->add_option("--seed", sa.seed, "seed for keys and transparent nonces");
  };

  std::string env, scen, log, listen = "127.0.0.1:7401", role, renegotiation;
  std::vector<std::string> traces, option_flags;
  bool campaign = false;
  int jobs = 1, timeout_ms = 5000;

  auto* run = app.add_subcommand("run", "run a scenario (or a campaign) in an environment and print the verdict");
  run->add_option("env", env, "environment config")->required();
  run->add_option("scenario", scen, "compiled scenario")->check(CLI::ExistingFile);
  run->add_option("--model,-m", model, "model for every honest agent (campaign: the model to mutate)")
      ->check(CLI::ExistingFile);
  run->add_flag("--campaign", campaign, "run every mutant of --model against every --trace");
  run->add_option("--trace,-t", traces, "attack trace (campaign, repeatable)")->check(CLI::ExistingFile);
  run->add_option("--out,-o", out, "campaign output directory");
  run->add_option("--log", log, "write the traffic log here");
  run->add_option("--jobs,-j", jobs, "parallel campaign runs");
  suite_flags(run);

  auto* serve = app.add_subcommand("serve", "run one honest role as a target");
  serve->add_option("model", model, "protocol model")->required()->check(CLI::ExistingFile);
  serve->add_option("--role,-r", role, "role to play")->required();
  serve->add_option("--listen,-l", listen, "address to listen on");
  serve->add_option("--option", option_flags, "model option, name=on|off (repeatable)");
  serve->add_option("--allow-renegotiation", renegotiation, "TLS server: on|off")
      ->check(CLI::IsMember({"on", "off"}));
  serve->add_option("--timeout-ms", timeout_ms, "per-message timeout");
  suite_flags(serve);

  std::string target;
  auto* exec = app.add_subcommand("exec", "execute a scenario against a running target");
  exec->add_option("scenario", scen, "compiled scenario")->required()->check(CLI::ExistingFile);
  exec->add_option("--target", target, "host:port")->required();
  exec->add_option("--env", env, "environment config supplying error patterns");
  exec->add_option("--timeout-ms", timeout_ms, "per-step timeout");
  int settle_ms = 250;
  exec->add_option("--settle-ms", settle_ms, "how long to watch for a reaction after finish()");
  suite_flags(exec);

  auto* val = app.add_subcommand("validate", "re-derive the verdict from a stored traffic log");
  val->add_option("env", env, "environment config")->required();
  val->add_option("log", log, "traffic log")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kInconclusive;
  }

  try {
    if (*mutate) return cmd_mutate(model, point, all, out);
    if (*comp) return cmd_compile(model, trace, out);
    if (*run) {
      if (campaign) {
        if (model.empty() || traces.empty()) throw std::invalid_argument("--campaign needs --model and --trace");
        return cmd_campaign(env, model, traces, sa, out, jobs);
      }
      if (scen.empty()) throw std::invalid_argument("run needs a scenario (or --campaign)");
      return cmd_run(env, scen, model, sa, log);
    }
    if (*serve) return cmd_serve(model, role, listen, option_flags, renegotiation, sa, timeout_ms);
    if (*exec) return cmd_exec(scen, target, env, sa, timeout_ms, settle_ms);
    if (*val) return cmd_validate(env, log);
  } catch (const ParseError& e) {
    std::cerr << "dyattack: " << e.what() << "\n";
    return kCompileFailed;
  } catch (const std::exception& e) {
    std::cerr << "dyattack: " << e.what() << "\n";
    return kInconclusive;
  }
  return kInconclusive;
}
