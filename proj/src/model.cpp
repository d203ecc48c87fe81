#include "dyattack/model.hpp"

#include <fstream>
#include <sstream>

namespace dyattack {

std::string_view mutation_kind_name(MutationKind k) {
  return k == MutationKind::AgentId ? "agent-id" : "nonce";
}

std::string MutationPoint::id() const {
  std::string s = role + "." + std::to_string(transition) + "." + variable;
  if (occurrence > 0) s += "#" + std::to_string(occurrence + 1);
  return s;
}

const Role* ProtocolModel::find_role(std::string_view n) const {
  for (const auto& r : roles)
    if (r.name == n) return &r;
  return nullptr;
}

namespace {

struct Line {
  int number;
  std::string text;
};

bool starts_with(std::string_view s, std::string_view p) { return s.substr(0, p.size()) == p; }

std::vector<Term> parse_term_list(std::string_view s, const SortTable& sorts, int line_no) {
  std::vector<Term> out;
  for (const auto& item : split_top_level(s, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(parse_term(item, sorts));
    } catch (const ParseError& e) {
      throw ParseError(e.what(), line_no, 1);
    }
  }
  return out;
}

// Variables bound before each transition, assuming every guarded transition runs.
void check_bindings(const Role& role) {
  std::set<Term> bound(role.knowledge.begin(), role.knowledge.end());
  for (const auto& p : role.parameters) bound.insert(p);
  bound.insert(Term::atom("start", Sort::Text));
  for (const auto& t : role.transitions) {
    for (const auto& [pos, atom] : atom_occurrences(t.pattern.term)) {
      bool primed = t.pattern.primed.count(pos) > 0;
      if (primed) continue;
      if (!bound.count(atom))
        throw ModelError("role " + role.name + " transition " + std::to_string(t.index) +
                         ": variable '" + atom.name() + "' used before it is bound");
    }
    for (const auto& [pos, atom] : atom_occurrences(t.pattern.term)) bound.insert(atom);
  }
}

}  // namespace

ProtocolModel parse_model(std::string_view src) {
  std::vector<Line> lines;
  ProtocolModel m;
  {
    std::istringstream in{std::string(src)};
    std::string raw;
    int n = 0;
    while (std::getline(in, raw)) {
      ++n;
      auto t = trim(raw);
      if (starts_with(t, "# mutant:")) {
        auto rest = trim(std::string_view(t).substr(9));
        auto sp = rest.find(' ');
        if (sp == std::string::npos) throw ParseError("malformed mutant header", n, 1);
        std::string kind = rest.substr(0, sp);
        if (kind != "agent-id" && kind != "nonce") throw ParseError("unknown mutant kind", n, 1);
        m.provenance.push_back(Provenance{
            {}, kind == "agent-id" ? MutationKind::AgentId : MutationKind::Nonce, trim(rest.substr(sp))});
        continue;
      }
      if (starts_with(t, "# original:")) {
        if (m.provenance.empty()) throw ParseError("'# original' without '# mutant'", n, 1);
        m.provenance.back().original = trim(std::string_view(t).substr(11));
        continue;
      }
      auto s = strip_comment(raw);
      if (!s.empty()) lines.push_back({n, s});
    }
  }
  if (lines.empty()) throw ParseError("empty model", 1, 1);

  std::size_t i = 0;
  auto expect_prefix = [&](std::string_view p) {
    if (i >= lines.size() || !starts_with(lines[i].text, p))
      throw ParseError("expected '" + std::string(p) + "'", i < lines.size() ? lines[i].number : 0, 1);
  };

  expect_prefix("protocol ");
  m.name = trim(std::string_view(lines[i].text).substr(9));
  ++i;
  expect_prefix("sorts:");
  {
    auto rest = trim(std::string_view(lines[i].text).substr(6));
    if (!rest.empty()) parse_sort_decl(rest, m.sorts, lines[i].number);
    ++i;
    while (i < lines.size() && lines[i].text.find(':') != std::string::npos &&
           sort_from_name(trim(std::string_view(lines[i].text).substr(0, lines[i].text.find(':'))))) {
      parse_sort_decl(lines[i].text, m.sorts, lines[i].number);
      ++i;
    }
  }
  if (!m.sorts.count("start")) m.sorts.emplace("start", Sort::Text);

  bool have_ik = false;
  while (i < lines.size()) {
    const Line& ln = lines[i];
    std::string_view t = ln.text;
    if (starts_with(t, "option ")) {
      auto body = trim(t.substr(7));
      auto eq = body.find('=');
      if (eq == std::string::npos) throw ParseError("expected 'option NAME = on|off'", ln.number, 1);
      auto val = trim(std::string_view(body).substr(eq + 1));
      if (val != "on" && val != "off") throw ParseError("option value must be on or off", ln.number, 1);
      m.options[trim(std::string_view(body).substr(0, eq))] = val == "on";
      ++i;
    } else if (starts_with(t, "role ")) {
      Role role;
      auto header = trim(t.substr(5));
      auto brace = header.find('{');
      if (brace == std::string::npos) throw ParseError("expected '{' after role header", ln.number, 1);
      auto sig = trim(std::string_view(header).substr(0, brace));
      auto paren = sig.find('(');
      role.name = trim(std::string_view(sig).substr(0, paren));
      if (role.name.empty()) throw ParseError("role needs a name", ln.number, 1);
      if (paren != std::string::npos) {
        auto close = sig.rfind(')');
        if (close == std::string::npos) throw ParseError("unclosed role parameter list", ln.number, 1);
        role.parameters =
            parse_term_list(std::string_view(sig).substr(paren + 1, close - paren - 1), m.sorts, ln.number);
      }
      if (m.find_role(role.name)) throw ParseError("duplicate role '" + role.name + "'", ln.number, 1);
      ++i;
      bool closed = false;
      while (i < lines.size()) {
        const Line& body = lines[i];
        std::string bt = body.text;
        if (!bt.empty() && bt.back() == ';') bt.pop_back();
        bt = trim(bt);
        ++i;
        if (bt == "}") {
          closed = true;
          break;
        }
        if (starts_with(bt, "knowledge:")) {
          auto more = parse_term_list(std::string_view(bt).substr(10), m.sorts, body.number);
          role.knowledge.insert(role.knowledge.end(), more.begin(), more.end());
          continue;
        }
        auto dot = bt.find('.');
        if (dot == std::string::npos) throw ParseError("expected 'N. SND(...)' or 'N. RCV(...)'", body.number, 1);
        Transition tr{0, Direction::Send, Pattern{Term::atom("start", Sort::Text), {}}, {}};
        try {
          tr.index = std::stoi(bt.substr(0, dot));
        } catch (...) {
          throw ParseError("bad transition number", body.number, 1);
        }
        std::string rest = trim(std::string_view(bt).substr(dot + 1));
        if (starts_with(rest, "[")) {
          auto close = rest.find(']');
          if (close == std::string::npos) throw ParseError("unclosed guard", body.number, 1);
          tr.guard = trim(std::string_view(rest).substr(1, close - 1));
          rest = trim(std::string_view(rest).substr(close + 1));
        }
        if (starts_with(rest, "SND(")) {
          tr.direction = Direction::Send;
        } else if (starts_with(rest, "RCV(")) {
          tr.direction = Direction::Receive;
        } else {
          throw ParseError("expected SND(...) or RCV(...)", body.number, 1);
        }
        if (rest.back() != ')') throw ParseError("unclosed transition", body.number, 1);
        try {
          tr.pattern = parse_pattern(std::string_view(rest).substr(4, rest.size() - 5), m.sorts);
        } catch (const ParseError& e) {
          throw ParseError(e.what(), body.number, 1);
        }
        if (tr.index != static_cast<int>(role.transitions.size()) + 1)
          throw ParseError("transitions must be numbered consecutively from 1", body.number, 1);
        if (!tr.guard.empty() && !m.options.count(tr.guard))
          throw ParseError("guard '" + tr.guard + "' is not a declared option", body.number, 1);
        role.transitions.push_back(std::move(tr));
      }
      if (!closed) throw ParseError("role '" + role.name + "' is not closed", ln.number, 1);
      m.roles.push_back(std::move(role));
    } else if (starts_with(t, "intruder_knowledge:")) {
      m.intruder_knowledge = parse_term_list(t.substr(19), m.sorts, ln.number);
      have_ik = true;
      ++i;
    } else if (starts_with(t, "intruder:")) {
      m.intruder = trim(t.substr(9));
      auto it = m.sorts.find(m.intruder);
      if (it == m.sorts.end() || it->second != Sort::Agent)
        throw ParseError("intruder must be a declared agent", ln.number, 1);
      ++i;
    } else {
      throw ParseError("unexpected line '" + ln.text + "'", ln.number, 1);
    }
  }
  if (!have_ik || m.intruder_knowledge.empty()) throw ModelError("model has no intruder_knowledge");
  if (std::find(m.intruder_knowledge.begin(), m.intruder_knowledge.end(), Term::atom("start", Sort::Text)) ==
      m.intruder_knowledge.end())
    throw ModelError("intruder_knowledge must contain start");
  if (m.intruder.empty()) throw ModelError("model declares no intruder agent");
  for (const auto& r : m.roles) check_bindings(r);
  return m;
}

ProtocolModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ModelError("cannot open model file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_model(ss.str());
}

std::string render_model(const ProtocolModel& m) {
  std::ostringstream out;
  for (const auto& p : m.provenance) {
    out << "# mutant: " << mutation_kind_name(p.kind) << " " << p.point << "\n";
    out << "# original: " << p.original << "\n";
  }
  out << "protocol " << m.name << "\n";
  out << "sorts:\n";
  std::map<Sort, std::vector<std::string>> by_sort;
  for (const auto& [name, s] : m.sorts) by_sort[s].push_back(name);
  for (const auto& [s, names] : by_sort) {
    out << "  " << sort_name(s) << ": ";
    for (std::size_t i = 0; i < names.size(); ++i) out << (i ? ", " : "") << names[i];
    out << "\n";
  }
  for (const auto& [name, on] : m.options) out << "option " << name << " = " << (on ? "on" : "off") << "\n";
  auto list = [](const std::vector<Term>& ts) {
    std::string s;
    for (std::size_t i = 0; i < ts.size(); ++i) s += (i ? ", " : "") + render_term(ts[i]);
    return s;
  };
  for (const auto& r : m.roles) {
    out << "\nrole " << r.name;
    if (!r.parameters.empty()) out << "(" << list(r.parameters) << ")";
    out << " {\n";
    if (!r.knowledge.empty()) out << "  knowledge: " << list(r.knowledge) << "\n";
    for (const auto& t : r.transitions) {
      out << "  " << t.index << ". ";
      if (!t.guard.empty()) out << "[" << t.guard << "] ";
      out << (t.direction == Direction::Send ? "SND(" : "RCV(") << render_pattern(t.pattern.term, t.pattern.primed)
          << ")\n";
    }
    out << "}\n";
  }
  out << "\nintruder: " << m.intruder << "\n";
  out << "intruder_knowledge: " << list(m.intruder_knowledge) << "\n";
  return out.str();
}

std::vector<MutationPoint> list_mutation_points(const ProtocolModel& m) {
  std::vector<MutationPoint> out;
  for (const auto& r : m.roles) {
    for (const auto& t : r.transitions) {
      if (t.direction != Direction::Receive) continue;
      std::map<std::string, int> seen;
      for (const auto& [pos, atom] : atom_occurrences(t.pattern.term)) {
        if (atom.kind() != TermKind::Atom) continue;
        int occ = seen[atom.name()]++;
        if (t.pattern.primed.count(pos)) continue;
        if (atom.sort() != Sort::Agent && atom.sort() != Sort::Nonce) continue;
        out.push_back(MutationPoint{r.name, t.index, atom.name(), occ,
                                    atom.sort() == Sort::Agent ? MutationKind::AgentId : MutationKind::Nonce,
                                    pos});
      }
    }
  }
  return out;
}

MutationPoint find_mutation_point(const ProtocolModel& m, std::string_view id) {
  auto points = list_mutation_points(m);
  for (const auto& p : points)
    if (p.id() == id) return p;
  std::string valid;
  for (const auto& p : points) valid += (valid.empty() ? "" : ", ") + p.id();
  throw ModelError("unknown mutation point '" + std::string(id) + "'; valid points: " +
                   (valid.empty() ? "(none)" : valid));
}

ProtocolModel apply_mutation(const ProtocolModel& m, const MutationPoint& p) {
  ProtocolModel out = m;
  for (auto& r : out.roles) {
    if (r.name != p.role) continue;
    for (auto& t : r.transitions) {
      if (t.index != p.transition) continue;
      if (t.direction != Direction::Receive) throw ModelError("mutation point " + p.id() + " is not a receive");
      const Term* at = nullptr;
      try {
        at = &term_at(t.pattern.term, p.position);
      } catch (const std::out_of_range&) {
      }
      if (!at || !at->is_atomic() || at->name() != p.variable)
        throw ModelError("mutation point " + p.id() + " not found");
      if (t.pattern.primed.count(p.position)) throw ModelError("mutation point " + p.id() + " already primed");
      t.pattern.primed.insert(p.position);
      out.provenance.push_back(Provenance{m.name, p.kind, p.id()});
      return out;
    }
  }
  throw ModelError("mutation point " + p.id() + " not found");
}

}  // namespace dyattack
