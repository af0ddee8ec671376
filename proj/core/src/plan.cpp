#include "aql/plan.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>

#include "aql/error.hpp"

namespace aql {

const std::vector<std::string>& plan_operators() {
  static const std::vector<std::string> ops{"LOAD",  "REBOX",      "FILTER",  "APPLY",      "SHIFT", "REDUCE",
                                            "APPLY+", "COMBINE", "INNERDJOIN", "FILL"};
  return ops;
}

const PlanNode& PlanScript::node(std::string_view id) const {
  for (const auto& n : nodes)
    if (n.id == id) return n;
  fail(Errc::parse, "no plan node '" + std::string(id) + "'");
}

const PlanNode& PlanScript::root() const {
  std::set<std::string> used;
  for (const auto& n : nodes) used.insert(n.inputs.begin(), n.inputs.end());
  for (const auto& n : nodes)
    if (!used.count(n.id)) return n;
  fail(Errc::parse, "plan has no root");
}

namespace {

enum class Tok { word, string, lparen, rparen, comma, equals, end };

struct Token {
  Tok kind;
  std::string text;
  int col;
};

bool word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == ':' || c == '.' || c == '-' || c == '+' ||
         c == '*';
}

bool is_ident(std::string_view s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  return std::all_of(s.begin(), s.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; });
}

[[noreturn]] void syntax(int line, int col, const std::string& msg) {
  fail(Errc::parse, "line " + std::to_string(line) + ":" + std::to_string(col) + ": " + msg);
}

std::vector<Token> lex(std::string_view s, int line) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const char c = s[i];
    const int col = static_cast<int>(i) + 1;
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (c == '#') {
      break;
    } else if (c == '(' || c == ')' || c == ',' || c == '=') {
      out.push_back({c == '(' ? Tok::lparen : c == ')' ? Tok::rparen : c == ',' ? Tok::comma : Tok::equals,
                     std::string(1, c), col});
      ++i;
    } else if (c == '"') {
      std::string v;
      ++i;
      bool closed = false;
      while (i < s.size()) {
        if (s[i] == '\\' && i + 1 < s.size()) {
          v += s[i + 1];
          i += 2;
        } else if (s[i] == '"') {
          closed = true;
          ++i;
          break;
        } else {
          v += s[i++];
        }
      }
      if (!closed) syntax(line, col, "unterminated string");
      out.push_back({Tok::string, v, col});
    } else if (word_char(c)) {
      std::size_t j = i;
      while (j < s.size() && word_char(s[j])) ++j;
      out.push_back({Tok::word, std::string(s.substr(i, j - i)), col});
      i = j;
    } else {
      syntax(line, col, std::string("unexpected character '") + c + "'");
    }
  }
  out.push_back({Tok::end, "", static_cast<int>(s.size()) + 1});
  return out;
}

std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

PlanNode parse_line(std::string_view text, int line) {
  const auto t = lex(text, line);
  std::size_t i = 0;
  auto expect = [&](Tok k, const char* what) -> const Token& {
    if (t[i].kind != k) syntax(line, t[i].col, std::string("expected ") + what);
    return t[i++];
  };
  PlanNode n;
  n.line = line;
  const Token& id = expect(Tok::word, "node id");
  if (!is_ident(id.text)) syntax(line, id.col, "invalid node id '" + id.text + "'");
  n.id = id.text;
  expect(Tok::equals, "'='");
  const Token& op = expect(Tok::word, "operator name");
  n.op = upper(op.text);
  if (n.op == "APPLYPLUS") n.op = "APPLY+";
  const auto& ops = plan_operators();
  if (std::find(ops.begin(), ops.end(), n.op) == ops.end()) syntax(line, op.col, "unknown operator '" + op.text + "'");
  expect(Tok::lparen, "'('");
  bool seen_in = false;
  if (t[i].kind != Tok::rparen) {
    while (true) {
      const Token& key = expect(Tok::word, "parameter name");
      if (!is_ident(key.text)) syntax(line, key.col, "invalid parameter name '" + key.text + "'");
      expect(Tok::equals, "'='");
      if (key.text == "in") {
        if (seen_in) syntax(line, key.col, "duplicate 'in'");
        seen_in = true;
        while (true) {
          const Token& ref = expect(Tok::word, "input node id");
          if (!is_ident(ref.text)) syntax(line, ref.col, "invalid input '" + ref.text + "'");
          n.inputs.push_back(ref.text);
          // `in=a,b` continues unless the comma starts the next key=value pair.
          if (t[i].kind == Tok::comma && t[i + 1].kind == Tok::word && t[i + 2].kind != Tok::equals) {
            ++i;
            continue;
          }
          break;
        }
      } else {
        if (t[i].kind != Tok::word && t[i].kind != Tok::string) syntax(line, t[i].col, "expected parameter value");
        for (const auto& [k, v] : n.params)
          if (k == key.text) syntax(line, key.col, "duplicate parameter '" + key.text + "'");
        n.params.emplace_back(key.text, t[i].text);
        ++i;
      }
      if (t[i].kind == Tok::comma) {
        ++i;
        continue;
      }
      break;
    }
  }
  expect(Tok::rparen, "')' or ','");
  if (t[i].kind != Tok::end) syntax(line, t[i].col, "trailing input after ')'");
  return n;
}

void check_arity(const PlanNode& n) {
  std::size_t want = 1;
  if (n.op == "LOAD") want = 0;
  if (n.op == "COMBINE" || n.op == "INNERDJOIN") want = 2;
  if (n.op == "REBOX") {
    const bool from_storage = std::any_of(n.params.begin(), n.params.end(), [](const auto& p) { return p.first == "array"; });
    want = from_storage ? 0 : 1;
  }
  if (n.inputs.size() != want)
    syntax(n.line, 1,
           n.op + " takes " + std::to_string(want) + " input(s), got " + std::to_string(n.inputs.size()));
}

}  // namespace

PlanScript parse_plan(std::string_view text) {
  PlanScript plan;
  int line = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    ++line;
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    const auto first = raw.find_first_not_of(" \t\r");
    if (first == std::string_view::npos || raw[first] == '#') continue;
    plan.nodes.push_back(parse_line(raw, line));
  }
  if (plan.nodes.empty()) fail(Errc::parse, "line 1:1: empty plan");

  std::map<std::string, std::size_t> index;
  for (std::size_t k = 0; k < plan.nodes.size(); ++k) {
    const auto& n = plan.nodes[k];
    if (!index.emplace(n.id, k).second) syntax(n.line, 1, "duplicate node id '" + n.id + "'");
  }
  for (const auto& n : plan.nodes) {
    for (const auto& in : n.inputs)
      if (!index.count(in) && in != n.id) syntax(n.line, 1, "node '" + n.id + "' references undefined '" + in + "'");
  }
  // Cycle detection (iterative DFS colouring).
  std::vector<int> colour(plan.nodes.size(), 0);
  for (std::size_t s = 0; s < plan.nodes.size(); ++s) {
    if (colour[s]) continue;
    std::vector<std::pair<std::size_t, std::size_t>> stack{{s, 0}};
    colour[s] = 1;
    while (!stack.empty()) {
      auto& [v, next] = stack.back();
      const auto& ins = plan.nodes[v].inputs;
      if (next == ins.size()) {
        colour[v] = 2;
        stack.pop_back();
        continue;
      }
      const std::size_t w = index.at(ins[next++]);
      if (colour[w] == 1)
        fail(Errc::cycle, "line " + std::to_string(plan.nodes[w].line) + ": node '" + plan.nodes[w].id +
                              "' is part of a reference cycle");
      if (colour[w] == 0) {
        colour[w] = 1;
        stack.emplace_back(w, 0);
      }
    }
  }
  for (std::size_t k = 0; k < plan.nodes.size(); ++k) {
    const auto& n = plan.nodes[k];
    for (const auto& in : n.inputs)
      if (index.at(in) > k) syntax(n.line, 1, "node '" + n.id + "' uses '" + in + "' before its definition");
    check_arity(n);
  }
  std::set<std::string> used;
  for (const auto& n : plan.nodes) used.insert(n.inputs.begin(), n.inputs.end());
  std::vector<std::string> roots;
  for (const auto& n : plan.nodes)
    if (!used.count(n.id)) roots.push_back(n.id);
  if (roots.size() != 1) {
    std::string list;
    for (const auto& r : roots) list += (list.empty() ? "" : ", ") + r;
    syntax(plan.nodes.back().line, 1, "plan must have exactly one root, found: " + list);
  }
  return plan;
}

namespace {

std::string quote(const std::string& v) {
  if (!v.empty() && std::all_of(v.begin(), v.end(), word_char)) return v;
  std::string out = "\"";
  for (char c : v) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string print_plan(const PlanScript& plan) {
  std::string out;
  for (const auto& n : plan.nodes) {
    out += n.id + " = " + n.op + "(";
    bool first = true;
    for (const auto& [k, v] : n.params) {
      out += (first ? "" : ", ") + k + "=" + quote(v);
      first = false;
    }
    if (!n.inputs.empty()) {
      out += (first ? "" : ", ") + std::string("in=");
      for (std::size_t i = 0; i < n.inputs.size(); ++i) out += (i ? "," : "") + n.inputs[i];
    }
    out += ")\n";
  }
  return out;
}

}  // namespace aql
