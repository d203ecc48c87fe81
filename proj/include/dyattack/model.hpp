#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "dyattack/term.hpp"

namespace dyattack {

enum class Direction { Send, Receive };

struct Transition {
  int index = 0;
  Direction direction = Direction::Send;
  Pattern pattern;
  /// Empty unless the transition only runs when the named option is on.
  std::string guard;
};

struct Role {
  std::string name;
  std::vector<Term> parameters;
  std::vector<Term> knowledge;
  std::vector<Transition> transitions;
};

enum class MutationKind { AgentId, Nonce };

std::string_view mutation_kind_name(MutationKind k);

/// One unprimed receive occurrence that a mutant may stop checking.
/// `occurrence` disambiguates repeated occurrences of the same variable in one transition.
struct MutationPoint {
  std::string role;
  int transition = 0;
  std::string variable;
  int occurrence = 0;
  MutationKind kind = MutationKind::AgentId;
  Position position;

  /// `B.1.a`, or `B.1.a#2` for the second occurrence of `a` in that transition.
  std::string id() const;
  friend bool operator==(const MutationPoint& a, const MutationPoint& b) {
    return a.id() == b.id() && a.kind == b.kind;
  }
};

struct Provenance {
  std::string original;
  MutationKind kind;
  std::string point;
};

struct ProtocolModel {
  std::string name;
  SortTable sorts;
  std::map<std::string, bool> options;
  std::vector<Role> roles;
  std::string intruder;
  std::vector<Term> intruder_knowledge;
  std::vector<Provenance> provenance;

  const Role* find_role(std::string_view name) const;
};

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

ProtocolModel parse_model(std::string_view src);
ProtocolModel load_model(const std::string& path);
std::string render_model(const ProtocolModel& m);

std::vector<MutationPoint> list_mutation_points(const ProtocolModel& m);
ProtocolModel apply_mutation(const ProtocolModel& m, const MutationPoint& p);
/// Looks a point up by its textual id; throws ModelError listing valid ids when absent.
MutationPoint find_mutation_point(const ProtocolModel& m, std::string_view id);

}  // namespace dyattack
