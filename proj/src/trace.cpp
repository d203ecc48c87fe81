#include "dyattack/trace.hpp"

#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

namespace dyattack {

namespace {

bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

std::string expand(std::string_view s, const std::map<std::string, std::string>& macros) {
  std::string out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (!ident_char(s[i])) {
      out += s[i++];
      continue;
    }
    std::size_t b = i;
    while (i < s.size() && ident_char(s[i])) ++i;
    std::string id(s.substr(b, i - b));
    auto it = macros.find(id);
    out += it == macros.end() ? id : "(" + it->second + ")";
  }
  return out;
}

Term agent(std::string_view name, const SortTable& sorts, int line) {
  std::string n = trim(name);
  auto it = sorts.find(n);
  if (it == sorts.end() || it->second != Sort::Agent) throw ParseError("unknown agent '" + n + "'", line, 1);
  return Term::atom(n, Sort::Agent);
}

}  // namespace

AttackTrace parse_trace(std::string_view src, const SortTable& sorts, std::string intruder) {
  AttackTrace trace;
  trace.intruder = std::move(intruder);
  std::map<std::string, std::string> macros;
  std::istringstream in{std::string(src)};
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string s = strip_comment(raw);
    if (s.empty()) continue;
    if (s.rfind("intruder ", 0) == 0) {
      trace.intruder = trim(std::string_view(s).substr(9));
      agent(trace.intruder, sorts, line);
      continue;
    }
    if (s.rfind("let ", 0) == 0) {
      auto eq = s.find('=');
      if (eq == std::string::npos) throw ParseError("expected 'let NAME = term'", line, 1);
      std::string name = trim(std::string_view(s).substr(4, eq - 4));
      if (name.empty() || sorts.count(name)) throw ParseError("bad macro name '" + name + "'", line, 5);
      std::string body = expand(trim(std::string_view(s).substr(eq + 1)), macros);
      try {
        parse_term(body, sorts);
      } catch (const ParseError& e) {
        throw ParseError(std::string("in macro ") + name + ": " + e.what(), line, 1);
      }
      macros[name] = body;
      continue;
    }
    std::size_t arrow = s.find("->");
    std::size_t alen = 2;
    if (arrow == std::string::npos) {
      arrow = s.find("→");
      alen = std::string_view("→").size();
    }
    if (arrow == std::string::npos) throw ParseError("expected 'A -> B : message'", line, 1);
    auto colon = s.find(':', arrow);
    if (colon == std::string::npos) throw ParseError("expected ':' after the receiver", line, 1);
    TraceStep step{agent(s.substr(0, arrow), sorts, line), agent(s.substr(arrow + alen, colon - arrow - alen), sorts, line),
                   Term::atom("start", Sort::Text), line};
    try {
      step.message = parse_term(expand(std::string_view(s).substr(colon + 1), macros), sorts);
    } catch (const ParseError& e) {
      throw ParseError(e.what(), line, static_cast<int>(colon) + 2);
    }
    trace.steps.push_back(std::move(step));
  }
  if (trace.steps.empty()) throw ParseError("trace has no steps", line, 1);
  if (trace.intruder.empty()) throw ParseError("no intruder declared", 1, 1);
  for (const auto& st : trace.steps)
    if (st.sender.name() != trace.intruder && st.receiver.name() != trace.intruder)
      throw ParseError("step has no intruder endpoint", st.line, 1);
  return trace;
}

AttackTrace load_trace(const std::string& path, const SortTable& sorts, std::string intruder) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trace file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_trace(ss.str(), sorts, std::move(intruder));
}

}  // namespace dyattack
