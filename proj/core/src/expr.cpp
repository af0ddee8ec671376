#include "aql/expr.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <functional>

namespace aql {

namespace {

using Node = Expr::Node;
using NodePtr = std::shared_ptr<const Node>;
using Op = Expr::Op;

NodePtr make(Op op, std::vector<NodePtr> args) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->args = std::move(args);
  return n;
}

class Parser {
 public:
  explicit Parser(std::string_view text) : s_(text) {}

  NodePtr parse() {
    skip();
    if (pos_ == s_.size()) error("empty expression");
    NodePtr n = parse_or();
    skip();
    if (pos_ != s_.size()) error("unexpected '" + std::string(1, s_[pos_]) + "'");
    return n;
  }

 private:
  [[noreturn]] void error(const std::string& msg) const {
    fail(Errc::parse, "expression '" + std::string(s_) + "' column " + std::to_string(pos_ + 1) + ": " + msg);
  }

  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool eat(std::string_view tok) {
    skip();
    if (s_.substr(pos_, tok.size()) == tok) {
      pos_ += tok.size();
      return true;
    }
    return false;
  }

  NodePtr parse_or() {
    NodePtr lhs = parse_and();
    while (eat("||")) lhs = make(Op::logical_or, {lhs, parse_and()});
    return lhs;
  }

  NodePtr parse_and() {
    NodePtr lhs = parse_cmp();
    while (eat("&&")) lhs = make(Op::logical_and, {lhs, parse_cmp()});
    return lhs;
  }

  NodePtr parse_cmp() {
    NodePtr lhs = parse_add();
    static constexpr std::pair<std::string_view, Op> ops[] = {
        {"<=", Op::le}, {">=", Op::ge}, {"==", Op::eq}, {"!=", Op::ne}, {"<", Op::lt}, {">", Op::gt}};
    for (auto [tok, op] : ops)
      if (eat(tok)) return make(op, {lhs, parse_add()});
    return lhs;
  }

  NodePtr parse_add() {
    NodePtr lhs = parse_mul();
    while (true) {
      if (eat("+"))
        lhs = make(Op::add, {lhs, parse_mul()});
      else if (eat("-"))
        lhs = make(Op::sub, {lhs, parse_mul()});
      else
        return lhs;
    }
  }

  NodePtr parse_mul() {
    NodePtr lhs = parse_unary();
    while (true) {
      if (eat("*"))
        lhs = make(Op::mul, {lhs, parse_unary()});
      else if (eat("/"))
        lhs = make(Op::div, {lhs, parse_unary()});
      else
        return lhs;
    }
  }

  NodePtr parse_unary() {
    if (eat("-")) return make(Op::neg, {parse_unary()});
    skip();
    if (pos_ < s_.size() && s_[pos_] == '!' && s_.substr(pos_, 2) != "!=") {
      ++pos_;
      return make(Op::logical_not, {parse_unary()});
    }
    return parse_primary();
  }

  NodePtr parse_primary() {
    skip();
    if (pos_ >= s_.size()) error("unexpected end of expression");
    const char c = s_[pos_];
    if (c == '(') {
      ++pos_;
      NodePtr n = parse_or();
      if (!eat(")")) error("expected ')'");
      return n;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::size_t start = pos_;
      while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) ++pos_;
      std::string name(s_.substr(start, pos_ - start));
      if (eat("(")) {
        std::vector<NodePtr> args;
        if (!eat(")")) {
          do {
            args.push_back(parse_or());
          } while (eat(","));
          if (!eat(")")) error("expected ')' after arguments");
        }
        Op op;
        std::size_t arity;
        if (name == "min") {
          op = Op::fn_min, arity = 2;
        } else if (name == "max") {
          op = Op::fn_max, arity = 2;
        } else if (name == "abs") {
          op = Op::fn_abs, arity = 1;
        } else {
          error("unknown function '" + name + "'");
        }
        if (args.size() != arity) error("wrong number of arguments to '" + name + "'");
        return make(op, std::move(args));
      }
      auto n = std::make_shared<Node>();
      n->op = Op::ref;
      n->name = std::move(name);
      return n;
    }
    error("unexpected '" + std::string(1, c) + "'");
  }

  NodePtr parse_number() {
    const std::size_t start = pos_;
    bool is_float = false;
    while (pos_ < s_.size()) {
      const char ch = s_[pos_];
      if (std::isdigit(static_cast<unsigned char>(ch))) {
        ++pos_;
      } else if (ch == '.') {
        is_float = true;
        ++pos_;
      } else if ((ch == 'e' || ch == 'E') && pos_ + 1 < s_.size()) {
        is_float = true;
        ++pos_;
        if (s_[pos_] == '+' || s_[pos_] == '-') ++pos_;
      } else {
        break;
      }
    }
    const std::string tok(s_.substr(start, pos_ - start));
    auto n = std::make_shared<Node>();
    n->op = Op::constant;
    if (is_float) {
      char* end = nullptr;
      const double v = std::strtod(tok.c_str(), &end);
      if (end != tok.c_str() + tok.size()) error("bad number '" + tok + "'");
      n->value = CellValue(v);
    } else {
      std::int64_t v = 0;
      auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc() || p != tok.data() + tok.size()) error("bad integer '" + tok + "'");
      n->value = CellValue(v);
    }
    return n;
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

std::string_view op_symbol(Op op) {
  switch (op) {
    case Op::add: return "+";
    case Op::sub: return "-";
    case Op::mul: return "*";
    case Op::div: return "/";
    case Op::lt: return "<";
    case Op::le: return "<=";
    case Op::gt: return ">";
    case Op::ge: return ">=";
    case Op::eq: return "==";
    case Op::ne: return "!=";
    case Op::logical_and: return "&&";
    case Op::logical_or: return "||";
    default: return "?";
  }
}

void print(const Node& n, std::string& out) {
  switch (n.op) {
    case Op::constant:
      if (n.value.is_int() && n.value.as_int() < 0) {
        out += "(" + n.value.to_string() + ")";
      } else if (!n.value.is_int()) {
        std::string s = n.value.to_string();
        if (s.find_first_of(".eE") == std::string::npos && s.find_first_of("ni") == std::string::npos) s += ".0";
        out += n.value.as_double() < 0 ? "(" + s + ")" : s;
      } else {
        out += n.value.to_string();
      }
      return;
    case Op::ref: out += n.name; return;
    case Op::neg:
      out += "-(";
      print(*n.args[0], out);
      out += ")";
      return;
    case Op::logical_not:
      out += "!(";
      print(*n.args[0], out);
      out += ")";
      return;
    case Op::fn_min:
    case Op::fn_max:
    case Op::fn_abs:
      out += n.op == Op::fn_min ? "min(" : n.op == Op::fn_max ? "max(" : "abs(";
      for (std::size_t i = 0; i < n.args.size(); ++i) {
        if (i) out += ", ";
        print(*n.args[i], out);
      }
      out += ")";
      return;
    default:
      out += "(";
      print(*n.args[0], out);
      out += " ";
      out += op_symbol(n.op);
      out += " ";
      print(*n.args[1], out);
      out += ")";
  }
}

bool truthy(const CellValue& v) { return v.is_int() ? v.as_int() != 0 : v.as_double() != 0.0; }

}  // namespace

Expr Expr::parse(std::string_view text) { return Expr(Parser(text).parse()); }

Expr Expr::constant(CellValue v) {
  auto n = std::make_shared<Node>();
  n->op = Op::constant;
  n->value = v;
  return Expr(n);
}

Expr Expr::ref(std::string name) {
  auto n = std::make_shared<Node>();
  n->op = Op::ref;
  n->name = std::move(name);
  return Expr(n);
}

std::vector<std::string> Expr::references() const {
  std::vector<std::string> out;
  if (!root_) return out;
  std::function<void(const Node&)> walk = [&](const Node& n) {
    if (n.op == Op::ref && std::find(out.begin(), out.end(), n.name) == out.end()) out.push_back(n.name);
    for (const auto& a : n.args) walk(*a);
  };
  walk(*root_);
  return out;
}

std::string Expr::to_string() const {
  std::string out;
  if (root_) print(*root_, out);
  return out;
}

BoundExpr::BoundExpr(const Expr& expr, std::span<const std::string> names, std::span<const AttrKind> kinds) {
  if (expr.empty()) fail(Errc::config, "empty expression");
  std::function<AttrKind(const Node&)> compile = [&](const Node& n) -> AttrKind {
    std::vector<AttrKind> arg_kinds;
    for (const auto& a : n.args) arg_kinds.push_back(compile(*a));
    Instr ins{n.op, n.value, 0};
    AttrKind kind = AttrKind::int64;
    switch (n.op) {
      case Op::constant: kind = n.value.kind(); break;
      case Op::ref: {
        auto it = std::find(names.begin(), names.end(), n.name);
        if (it == names.end()) fail(Errc::schema, "expression references unknown attribute '" + n.name + "'");
        ins.var = static_cast<std::size_t>(it - names.begin());
        if (std::find(used_.begin(), used_.end(), ins.var) == used_.end()) used_.push_back(ins.var);
        kind = kinds[ins.var];
        break;
      }
      case Op::neg:
      case Op::fn_abs: kind = arg_kinds[0]; break;
      case Op::add:
      case Op::sub:
      case Op::mul:
      case Op::div:
      case Op::fn_min:
      case Op::fn_max:
        kind = (arg_kinds[0] == AttrKind::float64 || arg_kinds[1] == AttrKind::float64) ? AttrKind::float64
                                                                                        : AttrKind::int64;
        break;
      default: kind = AttrKind::int64; break;
    }
    program_.push_back(ins);
    return kind;
  };
  result_kind_ = compile(expr.root());
}

CellValue BoundExpr::eval(std::span<const CellValue> vars) const {
  CellValue stack[32];
  std::size_t sp = 0;
  std::vector<CellValue> overflow;  // only for very deep expressions
  auto push = [&](CellValue v) {
    if (sp < 32)
      stack[sp++] = v;
    else
      overflow.push_back(v), ++sp;
  };
  auto pop = [&]() -> CellValue {
    --sp;
    if (sp >= 32) {
      CellValue v = overflow.back();
      overflow.pop_back();
      return v;
    }
    return stack[sp];
  };
  for (const auto& ins : program_) {
    switch (ins.op) {
      case Op::constant: push(ins.value); break;
      case Op::ref: push(vars[ins.var]); break;
      case Op::neg: {
        CellValue a = pop();
        push(a.is_int() ? CellValue(-a.as_int()) : CellValue(-a.as_double()));
        break;
      }
      case Op::fn_abs: {
        CellValue a = pop();
        push(a.is_int() ? CellValue(a.as_int() < 0 ? -a.as_int() : a.as_int())
                        : CellValue(std::abs(a.as_double())));
        break;
      }
      case Op::logical_not: push(CellValue(std::int64_t{truthy(pop()) ? 0 : 1})); break;
      default: {
        CellValue b = pop();
        CellValue a = pop();
        switch (ins.op) {
          case Op::add: push(a + b); break;
          case Op::sub: push(a - b); break;
          case Op::mul: push(a * b); break;
          case Op::div: push(a / b); break;
          case Op::lt: push(CellValue(std::int64_t{a < b})); break;
          case Op::le: push(CellValue(std::int64_t{a <= b})); break;
          case Op::gt: push(CellValue(std::int64_t{a > b})); break;
          case Op::ge: push(CellValue(std::int64_t{a >= b})); break;
          case Op::eq: push(CellValue(std::int64_t{a == b})); break;
          case Op::ne: push(CellValue(std::int64_t{!(a == b)})); break;
          case Op::logical_and: push(CellValue(std::int64_t{truthy(a) && truthy(b)})); break;
          case Op::logical_or: push(CellValue(std::int64_t{truthy(a) || truthy(b)})); break;
          case Op::fn_min: {
            const bool flt = !a.is_int() || !b.is_int();
            CellValue m = b < a ? b : a;
            push(flt ? CellValue(m.as_double()) : m);
            break;
          }
          case Op::fn_max: {
            const bool flt = !a.is_int() || !b.is_int();
            CellValue m = a < b ? b : a;
            push(flt ? CellValue(m.as_double()) : m);
            break;
          }
          default: fail(Errc::internal, "bad expression opcode");
        }
      }
    }
  }
  return pop();
}

}  // namespace aql
