#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "aql/aggregate.hpp"
#include "aql/array_model.hpp"
#include "aql/storage.hpp"

namespace aql {

/// One line of a plan script: `id = OP(key=value, ..., in=a,b)`.
struct PlanNode {
  std::string id;
  std::string op;  // upper case
  std::vector<std::pair<std::string, std::string>> params;
  std::vector<std::string> inputs;
  int line = 0;  // not part of equality

  friend bool operator==(const PlanNode& a, const PlanNode& b) {
    return a.id == b.id && a.op == b.op && a.params == b.params && a.inputs == b.inputs;
  }
};

/// Operator tree in definition order; the root is the one node nobody consumes.
struct PlanScript {
  std::vector<PlanNode> nodes;

  const PlanNode& root() const;
  const PlanNode& node(std::string_view id) const;
  friend bool operator==(const PlanScript&, const PlanScript&) = default;
};

/// Operators accepted by the parser.
const std::vector<std::string>& plan_operators();

/// Parses and validates a script. Errors: syntax, unknown operator, duplicate id,
/// dangling or forward reference, several roots (parse, with line:column);
/// reference cycles (cycle).
PlanScript parse_plan(std::string_view text);

/// Canonical text; parse_plan(print_plan(p)) == p.
std::string print_plan(const PlanScript& plan);

struct NodeReport {
  std::string id;
  std::string op;
  double seconds = 0;
  std::uint64_t chunks_read = 0;
  std::uint64_t bytes_read = 0;
  std::uint64_t merge_bytes = 0;
  std::uint64_t cells = 0;  // valid cells or table rows produced
};

struct PlanResult {
  std::variant<Array, Table> value;
  std::vector<NodeReport> nodes;
  std::uint64_t digest = 0;
};

/// Runs the operators exactly as written. Failures name the node and keep
/// their error code (missing array: catalog).
PlanResult execute_plan(const PlanScript& plan, const Catalog& catalog, int n_workers);

}  // namespace aql
