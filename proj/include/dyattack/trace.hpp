#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "dyattack/term.hpp"

namespace dyattack {

struct TraceStep {
  Term sender;
  Term receiver;
  Term message;
  int line = 0;
};

/// Abstract attack trace, seen from the intruder.
struct AttackTrace {
  std::string intruder;
  std::vector<TraceStep> steps;

  bool intruder_sends(std::size_t i) const { return steps.at(i).sender.name() == intruder; }
};

/// One step per line: `I -> B : msg` (or `→`). Blank lines and `#` comments are skipped.
/// Header lines: `intruder NAME` overrides `intruder`; `let NAME = term` defines a macro
/// usable in later lines (expanded as a parenthesized term).
AttackTrace parse_trace(std::string_view src, const SortTable& sorts, std::string intruder = {});
AttackTrace load_trace(const std::string& path, const SortTable& sorts, std::string intruder = {});

}  // namespace dyattack
