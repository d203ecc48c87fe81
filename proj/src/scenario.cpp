#include "dyattack/scenario.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace dyattack {

namespace {

std::string join_terms(const std::vector<Term>& ts) {
  std::string s;
  for (const auto& t : ts) s += (s.empty() ? "" : ", ") + render_term(t);
  return s;
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

RecipeKind composition_kind(const Term& t) {
  switch (t.kind()) {
    case TermKind::Pair: return RecipeKind::Pair;
    case TermKind::Crypt: return RecipeKind::Crypt;
    case TermKind::SCrypt: return RecipeKind::SCrypt;
    case TermKind::Hash: return RecipeKind::Hash;
    default: return RecipeKind::Apply;
  }
}

void append_saturation(KnowledgeBase& kb, ScenarioStep& st) {
  auto sat = saturate(kb);
  // Entries first (a check may use one of them), then the checks.
  for (int idx : sat.added) st.recipes.emplace_back(idx, kb.at(idx).recipe);
  for (auto& [idx, r] : sat.checks) st.recipes.emplace_back(idx, std::move(r));
}

// Drops decompositions whose result nothing uses. Live roots: sent indices, received
// slots and checks.
void prune(Scenario& s) {
  std::set<int> defined_before;
  for (const auto& [i, t] : s.initial) defined_before.insert(i);
  // A recipe is a check when its index was defined earlier in emission order.
  std::vector<std::vector<bool>> is_check(s.steps.size());
  for (std::size_t k = 0; k < s.steps.size(); ++k)
    for (const auto& [idx, r] : s.steps[k].recipes) is_check[k].push_back(!defined_before.insert(idx).second);

  std::set<int> needed;
  for (std::size_t k = s.steps.size(); k-- > 0;) {
    auto& st = s.steps[k];
    if (st.action == ActionKind::Send) needed.insert(st.index);
    std::vector<std::pair<int, Recipe>> kept;
    for (std::size_t j = st.recipes.size(); j-- > 0;) {
      const auto& [idx, r] = st.recipes[j];
      bool keep = is_check[k][j] || r.kind == RecipeKind::ReceivedAt || needed.count(idx);
      if (!keep) continue;
      if (is_check[k][j]) needed.insert(idx);
      needed.insert(r.args.begin(), r.args.end());
      kept.push_back(st.recipes[j]);
    }
    std::reverse(kept.begin(), kept.end());
    st.recipes = std::move(kept);
  }
}

bool match_renaming(const Term& expected, const Term& actual, std::map<Term, Term>& renaming) {
  if (expected.kind() == TermKind::Atom && expected.sort() == Sort::Nonce && actual.kind() == TermKind::Fresh) {
    auto [it, inserted] = renaming.emplace(expected, actual);
    return inserted || it->second == actual;
  }
  if (expected.kind() != actual.kind() || expected.children().size() != actual.children().size()) return false;
  if (expected.is_atomic() || expected.kind() == TermKind::Apply) {
    if (expected.name() != actual.name() || expected.sort() != actual.sort()) return false;
    if (expected.is_atomic()) return expected == actual;
  }
  for (std::size_t i = 0; i < expected.children().size(); ++i)
    if (!match_renaming(expected.child(i), actual.child(i), renaming)) return false;
  return true;
}

Term rename(const Term& t, const std::map<Term, Term>& renaming) {
  if (auto it = renaming.find(t); it != renaming.end()) return it->second;
  if (t.children().empty()) return t;
  std::vector<Term> kids;
  for (const auto& k : t.children()) kids.push_back(rename(k, renaming));
  switch (t.kind()) {
    case TermKind::Pair: return Term::pair(kids[0], kids[1]);
    case TermKind::Crypt: return Term::crypt(kids[0], kids[1]);
    case TermKind::SCrypt: return Term::scrypt(kids[0], kids[1]);
    case TermKind::Inv: return Term::inv(kids[0]);
    case TermKind::Hash: return Term::hash(kids[0]);
    default: return Term::apply(t.name(), std::move(kids));
  }
}

}  // namespace

std::size_t Scenario::action_count() const {
  return std::count_if(steps.begin(), steps.end(), [](const ScenarioStep& s) { return s.action != ActionKind::Finish; });
}

CompileError::CompileError(int step, std::vector<Term> missing)
    : std::runtime_error("step " + std::to_string(step) + ": intruder cannot derive " + join_terms(missing)),
      step_(step),
      missing_(std::move(missing)) {}

Scenario compile(const AttackTrace& trace, const ProtocolModel& model) {
  Scenario s;
  s.sorts = model.sorts;
  KnowledgeBase kb;
  for (const auto& t : model.intruder_knowledge) s.initial.emplace_back(kb.add(t, Recipe::iknown()), t);

  for (std::size_t n = 0; n < trace.steps.size(); ++n) {
    const int step = static_cast<int>(n);
    const Term& msg = trace.steps[n].message;
    ScenarioStep st;
    st.number = step;
    st.term = msg;
    if (trace.intruder_sends(n)) {
      st.action = ActionKind::Send;
      append_saturation(kb, st);
      auto d = derive(kb, msg, {true, step});
      if (!d.derivable) throw CompileError(step, d.missing);
      for (int idx : d.new_entries) st.recipes.emplace_back(idx, kb.at(idx).recipe);
      st.index = d.root;
    } else {
      st.action = ActionKind::Receive;
      const int r = kb.allocate();
      st.index = r;
      st.recipes.emplace_back(r, Recipe::received_at(step));
      if (is_constructor(msg) && is_derivable(kb, msg)) {
        // Everything is known: rebuild it and compare.
        std::vector<int> args;
        for (const auto& k : msg.children()) {
          auto d = derive(kb, k);
          for (int idx : d.new_entries) st.recipes.emplace_back(idx, kb.at(idx).recipe);
          args.push_back(d.root);
        }
        kb.add_at(r, msg, Recipe::received_at(step));
        kb.mark_decomposed(r);
        st.recipes.emplace_back(r, Recipe::op(composition_kind(msg), std::move(args),
                                              msg.kind() == TermKind::Apply ? msg.name() : std::string{}));
      } else {
        kb.reserve_subterms(msg);
        kb.add_at(r, msg, Recipe::received_at(step));
        append_saturation(kb, st);
      }
    }
    s.steps.push_back(std::move(st));
  }
  ScenarioStep fin;
  fin.number = static_cast<int>(trace.steps.size());
  s.steps.push_back(std::move(fin));
  prune(s);
  return s;
}

// ---------------------------------------------------------------------------
// Text form

std::string render_scenario(const Scenario& s) {
  std::ostringstream out;
  if (!s.sorts.empty()) out << "sorts: " << render_sort_decls(s.sorts) << "\n";
  out << "Step -1:\n";
  for (const auto& [i, t] : s.initial) out << i << " = " << render_term(t) << " = iknown\n";
  for (const auto& st : s.steps) {
    out << "Step " << st.number << ":\n";
    switch (st.action) {
      case ActionKind::Send: out << "!" << st.index << " = " << render_term(*st.term) << "\n"; break;
      case ActionKind::Receive: out << "?" << st.index << " = " << render_term(*st.term) << "\n"; break;
      case ActionKind::Finish: out << "finish()\n"; break;
    }
    for (const auto& [i, r] : st.recipes) out << i << "=" << render_recipe(r) << "\n";
  }
  return out.str();
}

namespace {

int parse_index(std::string_view s, int line) {
  std::string t = trim(s);
  if (t.empty() || !std::all_of(t.begin(), t.end(), ::isdigit)) throw ParseError("expected an index, got '" + t + "'", line, 1);
  return std::stoi(t);
}

Term parse_term_at(std::string_view s, const SortTable& sorts, int line) {
  try {
    return parse_term(s, sorts);
  } catch (const ParseError& e) {
    throw ParseError(e.what(), line, 1);
  }
}

}  // namespace

Scenario parse_scenario(std::string_view src) {
  Scenario s;
  std::istringstream in{std::string(src)};
  std::string raw;
  int line = 0;
  bool in_initial = false, need_action = false;
  while (std::getline(in, raw)) {
    ++line;
    std::string l = strip_comment(raw);
    if (l.empty()) continue;
    if (l.rfind("sorts:", 0) == 0) {
      if (in_initial || !s.steps.empty()) throw ParseError("sorts must come before Step -1", line, 1);
      parse_sort_decl(std::string_view(l).substr(6), s.sorts, line);
      s.sorts.emplace("start", Sort::Text);
      continue;
    }
    if (l.rfind("Step ", 0) == 0 && l.back() == ':') {
      std::string num = trim(std::string_view(l).substr(5, l.size() - 6));
      if (need_action) throw ParseError("step without an action", line, 1);
      if (num == "-1") {
        if (in_initial || !s.steps.empty()) throw ParseError("Step -1 must come first", line, 1);
        in_initial = true;
        continue;
      }
      if (!in_initial && s.steps.empty()) throw ParseError("expected 'Step -1:' first", line, 1);
      if (s.finished()) throw ParseError("step after finish()", line, 1);
      ScenarioStep st;
      st.number = parse_index(num, line);
      s.steps.push_back(std::move(st));
      in_initial = false;
      need_action = true;
      continue;
    }
    if (in_initial) {
      auto parts = split_top_level(l, '=');
      if (parts.size() != 3 || parts[2] != "iknown") throw ParseError("expected '<idx> = <term> = iknown'", line, 1);
      s.initial.emplace_back(parse_index(parts[0], line), parse_term_at(parts[1], s.sorts, line));
      continue;
    }
    if (s.steps.empty()) throw ParseError("expected 'Step -1:'", line, 1);
    auto& st = s.steps.back();
    if (need_action) {
      need_action = false;
      if (l == "finish()") {
        st.action = ActionKind::Finish;
        continue;
      }
      if (l[0] != '!' && l[0] != '?') throw ParseError("expected '!<idx> = term', '?<idx> = term' or finish()", line, 1);
      auto eq = l.find('=');
      if (eq == std::string::npos) throw ParseError("expected '='", line, 1);
      st.action = l[0] == '!' ? ActionKind::Send : ActionKind::Receive;
      st.index = parse_index(std::string_view(l).substr(1, eq - 1), line);
      st.term = parse_term_at(std::string_view(l).substr(eq + 1), s.sorts, line);
      continue;
    }
    if (st.action == ActionKind::Finish) throw ParseError("finish() takes no recipes", line, 1);
    auto eq = l.find('=');
    if (eq == std::string::npos) throw ParseError("expected '<idx>=<recipe>'", line, 1);
    try {
      st.recipes.emplace_back(parse_index(std::string_view(l).substr(0, eq), line),
                              parse_recipe(std::string_view(l).substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw ParseError(e.what(), line, static_cast<int>(eq) + 2);
    }
  }
  if (need_action) throw ParseError("step without an action", line, 1);
  if (!s.finished()) throw ParseError("scenario must end with finish()", line, 1);
  validate_scenario(s);
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

void validate_scenario(const Scenario& s) {
  auto fail = [](const std::string& what) { throw std::invalid_argument(what); };
  if (s.initial.empty() || render_term(s.initial.front().second) != "start" || s.initial.front().first != 0)
    fail("index 0 must hold start");
  std::set<int> defined;
  for (std::size_t i = 0; i < s.initial.size(); ++i) {
    if (s.initial[i].first != static_cast<int>(i)) fail("initial knowledge indices must be dense from 0");
    defined.insert(s.initial[i].first);
  }
  for (std::size_t k = 0; k < s.steps.size(); ++k) {
    const auto& st = s.steps[k];
    const std::string where = "step " + std::to_string(st.number) + ": ";
    if (st.number != static_cast<int>(k)) fail(where + "steps must be numbered 0, 1, 2, ...");
    if (st.action == ActionKind::Finish) {
      if (k + 1 != s.steps.size()) fail(where + "finish() must be the last step");
      continue;
    }
    if (!st.term) fail(where + "missing expected term");
    bool received = false;
    for (const auto& [idx, r] : st.recipes) {
      for (int a : r.args)
        if (!defined.count(a)) fail(where + "index " + std::to_string(a) + " used before it is defined");
      bool again = defined.count(idx) > 0;
      switch (r.kind) {
        case RecipeKind::IKnown: fail(where + "iknown only belongs to Step -1"); break;
        case RecipeKind::ReceivedAt:
          if (st.action != ActionKind::Receive || idx != st.index || r.step != st.number || again || received)
            fail(where + "misplaced received-at recipe for " + std::to_string(idx));
          received = true;
          break;
        case RecipeKind::GeneratedNonceAt:
          if (r.step != st.number || again) fail(where + "misplaced generated-nonce recipe for " + std::to_string(idx));
          break;
        default: break;
      }
      if (st.action == ActionKind::Receive && !received) fail(where + "a receive step must start with its received-at recipe");
      defined.insert(idx);
    }
    if (st.action == ActionKind::Receive && !received) fail(where + "receive without a received-at recipe");
    if (!defined.count(st.index)) fail(where + "index " + std::to_string(st.index) + " is never defined");
  }
  if (!s.finished()) fail("scenario must end with finish()");
}

// ---------------------------------------------------------------------------
// Symbolic run

std::map<int, Term> evaluate_symbolic(const Scenario& s) {
  std::map<int, Term> val;
  std::map<Term, Term> renaming;
  for (const auto& [i, t] : s.initial) val.emplace(i, t);
  for (const auto& st : s.steps) {
    const std::string where = "step " + std::to_string(st.number) + ": ";
    for (const auto& [idx, r] : st.recipes) {
      Term v = Term::atom("start", Sort::Text);
      if (r.kind == RecipeKind::ReceivedAt) {
        v = rename(*st.term, renaming);
      } else if (r.kind == RecipeKind::GeneratedNonceAt) {
        v = Term::fresh("n" + std::to_string(idx), Sort::Nonce, r.step);
      } else {
        std::vector<Term> args;
        for (int a : r.args) args.push_back(val.at(a));
        try {
          v = apply_recipe(r, args);
        } catch (const std::invalid_argument& e) {
          throw std::logic_error(where + "recipe for " + std::to_string(idx) + " does not apply: " + e.what());
        }
      }
      auto [it, inserted] = val.emplace(idx, v);
      if (!inserted && !(it->second == v))
        throw std::logic_error(where + "check on " + std::to_string(idx) + " fails: " + render_term(it->second) +
                               " vs " + render_term(v));
    }
    if (st.action == ActionKind::Send && !match_renaming(*st.term, val.at(st.index), renaming))
      throw std::logic_error(where + "sent value " + render_term(val.at(st.index)) + " does not match " +
                             render_term(*st.term));
  }
  return val;
}

}  // namespace dyattack
