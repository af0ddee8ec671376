#include <chrono>
#include <map>
#include <sstream>

#include "aql/algebra.hpp"
#include "aql/apply_plus.hpp"
#include "aql/bench.hpp"
#include "aql/error.hpp"
#include "aql/plan.hpp"

namespace aql {

namespace {

using Value = std::variant<Array, Table>;

std::optional<std::string> param(const PlanNode& n, std::string_view key) {
  for (const auto& [k, v] : n.params)
    if (k == key) return v;
  return std::nullopt;
}

std::string need(const PlanNode& n, std::string_view key) {
  auto v = param(n, key);
  if (!v) fail(Errc::config, n.op + " needs parameter '" + std::string(key) + "'");
  return *v;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t"), b = s.find_last_not_of(" \t");
  return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const auto k = s.find(sep, pos);
    out.push_back(trim(std::string(s.substr(pos, k == std::string_view::npos ? std::string_view::npos : k - pos))));
    if (k == std::string_view::npos) break;
    pos = k + 1;
  }
  return out;
}

std::int64_t to_int(const std::string& s) {
  try {
    std::size_t used = 0;
    const auto v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail(Errc::config, "expected an integer, got '" + s + "'");
  }
}

Range to_range(const std::string& s) {
  const auto colon = s.find(':', s[0] == '-' ? 1 : 0);
  if (colon == std::string::npos) {
    const auto v = to_int(s);
    return {v, v};
  }
  return {to_int(s.substr(0, colon)), to_int(s.substr(colon + 1))};
}

const Array& array_of(const std::map<std::string, Value>& done, const PlanNode& n, std::size_t i) {
  const Value& v = done.at(n.inputs[i]);
  if (!std::holds_alternative<Array>(v))
    fail(Errc::schema, "input '" + n.inputs[i] + "' is a table, " + n.op + " needs an array");
  return std::get<Array>(v);
}

ScanOptions scan_for(const PlanNode& n, int workers) {
  ScanOptions s;
  s.n_workers = workers;
  if (auto c = param(n, "columns")) s.columns = split(*c, ',');
  return s;
}

Box box_from(const ArraySchema& schema, const PlanNode& n) {
  Box box = schema.box();
  for (const auto& [k, v] : n.params) {
    if (k == "array" || k == "columns" || k == "mode") continue;
    box[schema.require_dim(k)] = to_range(v);
  }
  return box;
}

AggSpec parse_agg(const std::string& text) {
  // "kind(attr)" or "kind(attr) as name"
  const auto open = text.find('('), close = text.find(')');
  if (open == std::string::npos || close == std::string::npos || close < open)
    fail(Errc::config, "aggregate '" + text + "' must look like kind(attr)");
  AggSpec a;
  a.kind = parse_agg_kind(text.substr(0, open));
  a.attr = text.substr(open + 1, close - open - 1);
  if (a.attr == "*") a.attr.clear();
  const auto as = text.find(" as ", close);
  if (as != std::string::npos) a.output = text.substr(as + 4);
  return a;
}

std::vector<AggSpec> aggs_of(const PlanNode& n) {
  std::vector<AggSpec> out;
  if (auto list = param(n, "aggs")) {
    // Split at top-level commas.
    int depth = 0;
    std::string cur;
    for (char c : *list) {
      if (c == '(') ++depth;
      if (c == ')') --depth;
      if (c == ',' && depth == 0) {
        out.push_back(parse_agg(trim(cur)));
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (!cur.empty()) out.push_back(parse_agg(trim(cur)));
    return out;
  }
  AggSpec a;
  a.kind = parse_agg_kind(need(n, "agg"));
  a.attr = param(n, "attr").value_or("");
  if (a.attr == "*") a.attr.clear();
  a.output = param(n, "output").value_or("");
  out.push_back(a);
  return out;
}

GlaOptions gla_for(int workers) {
  GlaOptions o;
  o.tree = AggregationTree::build(AggregationTree::Shape::balanced_binary, workers);
  return o;
}

Value run_node(const PlanNode& n, const std::map<std::string, Value>& done, const Catalog& catalog, int workers,
               NodeReport& rep) {
  const std::string& op = n.op;
  if (op == "LOAD") {
    const auto name = need(n, "array");
    catalog.entry(name);
    return load_array(catalog, name, std::nullopt, {}, scan_for(n, workers));
  }
  if (op == "REBOX") {
    if (auto name = param(n, "array")) {
      const auto& e = catalog.entry(*name);
      return rebox(catalog, *name, box_from(e.schema, n), scan_for(n, workers));
    }
    const Array& in = array_of(done, n, 0);
    const auto mode = param(n, "mode").value_or("clip");
    if (mode != "clip" && mode != "extend") fail(Errc::mode, "unknown rebox mode '" + mode + "'");
    return rebox(in, box_from(in.schema, n), mode == "clip" ? ReboxMode::clip : ReboxMode::extend);
  }
  if (op == "FILTER") {
    const Array& in = array_of(done, n, 0);
    return filter(in, Predicate::parse(in.schema, need(n, "pred")));
  }
  if (op == "APPLY") {
    const Array& in = array_of(done, n, 0);
    return apply(in, need(n, "name"), Expr::parse(need(n, "expr")));
  }
  if (op == "SHIFT") {
    const Array& in = array_of(done, n, 0);
    std::vector<std::int64_t> offset(in.schema.dims.size(), 0);
    for (const auto& [k, v] : n.params) offset[in.schema.require_dim(k)] = to_int(v);
    return shift(in, offset);
  }
  if (op == "REDUCE") {
    const Array& in = array_of(done, n, 0);
    std::vector<std::string> keep;
    if (auto k = param(n, "keep"))
      for (auto& d : split(*k, ',')) keep.push_back(d);
    GlaStats st;
    Table t = reduce(in, keep, aggs_of(n), gla_for(workers), &st);
    rep.merge_bytes += st.traffic_bytes();
    return t;
  }
  if (op == "APPLY+") {
    const Array& in = array_of(done, n, 0);
    ApplyPlusSpec spec;
    for (const auto& r : split(need(n, "shape"), ',')) spec.shape.offsets.push_back(to_range(r));
    if (auto p = param(n, "pattern")) spec.patterns = split(*p, ',');
    spec.aggs = aggs_of(n);
    const auto b = param(n, "boundary").value_or("merge");
    if (b != "merge" && b != "overlap") fail(Errc::config, "boundary must be merge or overlap");
    spec.boundary = b == "merge" ? Boundary::merge : Boundary::overlap;
    spec.clip_to_next_origin = param(n, "clip").value_or("false") == "true";
    ApplyPlusStats st;
    Array out = apply_plus(in, spec, gla_for(in.n_workers), &st);
    rep.merge_bytes += st.gla.traffic_bytes();
    return out;
  }
  if (op == "COMBINE") {
    return combine(array_of(done, n, 0), array_of(done, n, 1), Expr::parse(need(n, "expr")));
  }
  if (op == "INNERDJOIN") return inner_djoin(array_of(done, n, 0), array_of(done, n, 1));
  if (op == "FILL") {
    const Array& in = array_of(done, n, 0);
    const auto v = need(n, "default");
    std::map<std::string, CellValue> defaults;
    for (const auto& a : in.schema.attrs)
      defaults[a.name] = a.kind == AttrKind::int64 ? CellValue(to_int(v)) : CellValue(std::stod(v));
    return fill(in, defaults);
  }
  fail(Errc::config, "operator " + op + " is not executable");
}

std::string strip_code(const Error& e) {
  const std::string w = e.what();
  const auto k = w.find("error: ");
  return k == std::string::npos ? w : w.substr(k + 7);
}

}  // namespace

PlanResult execute_plan(const PlanScript& plan, const Catalog& catalog, int n_workers) {
  if (n_workers < 1) fail(Errc::config, "worker count must be positive");
  std::map<std::string, Value> done;
  PlanResult result;
  for (const auto& n : plan.nodes) {
    NodeReport rep;
    rep.id = n.id;
    rep.op = n.op;
    const auto c0 = catalog.io().chunks_read.load(), b0 = catalog.io().bytes_read.load();
    const auto t0 = std::chrono::steady_clock::now();
    Value v;
    try {
      v = run_node(n, done, catalog, n_workers, rep);
    } catch (const Error& e) {
      throw Error(e.code(), "node '" + n.id + "' (line " + std::to_string(n.line) + "): " + strip_code(e));
    }
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rep.chunks_read = catalog.io().chunks_read - c0;
    rep.bytes_read = catalog.io().bytes_read - b0;
    rep.cells = std::holds_alternative<Array>(v) ? std::get<Array>(v).valid_cells() : std::get<Table>(v).size();
    result.nodes.push_back(rep);
    done[n.id] = std::move(v);
  }
  result.value = std::move(done.at(plan.root().id));
  result.digest = std::holds_alternative<Array>(result.value) ? digest(std::get<Array>(result.value))
                                                              : digest(std::get<Table>(result.value));
  return result;
}

}  // namespace aql
