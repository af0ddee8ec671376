#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aql/array_model.hpp"

namespace aql {

/// Scalar expression over named variables (attributes), e.g. `v1 + v2 * 2`,
/// `min(a, b)`, `v1 >= 100 && v2 < 7`. Comparisons and logical operators yield
/// int64 0/1. Division by zero raises ArithmeticFault at evaluation time.
class Expr {
 public:
  enum class Op {
    constant, ref, neg, logical_not,
    add, sub, mul, div,
    lt, le, gt, ge, eq, ne,
    logical_and, logical_or,
    fn_min, fn_max, fn_abs,
  };

  struct Node {
    Op op = Op::constant;
    CellValue value;
    std::string name;
    std::vector<std::shared_ptr<const Node>> args;
  };

  Expr() = default;
  explicit Expr(std::shared_ptr<const Node> root) : root_(std::move(root)) {}

  /// Throws Errc::parse with a column position.
  static Expr parse(std::string_view text);
  static Expr constant(CellValue v);
  static Expr ref(std::string name);

  bool empty() const { return root_ == nullptr; }
  const Node& root() const { return *root_; }
  std::vector<std::string> references() const;
  std::string to_string() const;

 private:
  std::shared_ptr<const Node> root_;
};

/// An expression compiled against a fixed variable list.
class BoundExpr {
 public:
  /// Throws Errc::schema when the expression names an unknown variable.
  BoundExpr(const Expr& expr, std::span<const std::string> names, std::span<const AttrKind> kinds);

  CellValue eval(std::span<const CellValue> vars) const;
  AttrKind result_kind() const { return result_kind_; }
  /// Indices (into the variable list) the expression reads.
  const std::vector<std::size_t>& used() const { return used_; }

 private:
  struct Instr {
    Expr::Op op;
    CellValue value;
    std::size_t var = 0;
  };
  std::vector<Instr> program_;  // postfix
  std::vector<std::size_t> used_;
  AttrKind result_kind_ = AttrKind::int64;
};

}  // namespace aql
