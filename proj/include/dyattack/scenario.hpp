#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dyattack/derivation.hpp"
#include "dyattack/model.hpp"
#include "dyattack/term.hpp"
#include "dyattack/trace.hpp"

namespace dyattack {

enum class ActionKind { Send, Receive, Finish };

struct ScenarioStep {
  int number = 0;
  ActionKind action = ActionKind::Finish;
  int index = -1;
  /// Expected term of a Send or Receive.
  std::optional<Term> term;
  std::vector<std::pair<int, Recipe>> recipes;
};

/// Executable intruder program. A recipe whose index is already defined is a check: at
/// run time the rebuilt value must equal the stored one.
struct Scenario {
  SortTable sorts;
  std::vector<std::pair<int, Term>> initial;
  std::vector<ScenarioStep> steps;

  bool finished() const { return !steps.empty() && steps.back().action == ActionKind::Finish; }
  std::size_t action_count() const;
};

class CompileError : public std::runtime_error {
 public:
  CompileError(int step, std::vector<Term> missing);
  int step() const { return step_; }
  const std::vector<Term>& missing() const { return missing_; }

 private:
  int step_;
  std::vector<Term> missing_;
};

Scenario compile(const AttackTrace& trace, const ProtocolModel& model);

std::string render_scenario(const Scenario& s);
/// Throws ParseError for syntax and std::invalid_argument for index discipline.
Scenario parse_scenario(std::string_view src);
Scenario load_scenario(const std::string& path);

/// Index discipline: every recipe argument and every action index is defined before use,
/// quoted step numbers match their step, nothing but checks writes an index twice.
void validate_scenario(const Scenario& s);

/// Runs the scenario over symbolic terms. Generated nonces become Fresh("n<idx>") values
/// and received slots hold the expected term under the renaming built so far. Returns
/// index -> value. Throws std::logic_error naming the step when a send does not match its
/// expected term or a check fails.
std::map<int, Term> evaluate_symbolic(const Scenario& s);

}  // namespace dyattack
