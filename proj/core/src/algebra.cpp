#include "aql/algebra.hpp"

#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <thread>
#include <unordered_map>

namespace aql {

std::vector<std::string> attr_names(const std::vector<AttributeSpec>& attrs) {
  std::vector<std::string> out;
  for (const auto& a : attrs) out.push_back(a.name);
  return out;
}

std::vector<AttrKind> attr_kinds(const std::vector<AttributeSpec>& attrs) {
  std::vector<AttrKind> out;
  for (const auto& a : attrs) out.push_back(a.kind);
  return out;
}

std::vector<std::optional<Chunk>> map_chunks(const Array& in,
                                             const std::function<std::optional<Chunk>(const Chunk&, int)>& fn) {
  std::vector<std::optional<Chunk>> out(in.chunks.size());
  const int nw = std::max(1, in.n_workers);
  std::vector<std::vector<std::size_t>> per_worker(static_cast<std::size_t>(nw));
  for (std::size_t i = 0; i < in.chunks.size(); ++i)
    per_worker[static_cast<std::size_t>(in.worker_of(i) % nw)].push_back(i);
  std::exception_ptr error;
  std::mutex mu;
  auto run = [&](std::size_t w) {
    for (auto i : per_worker[w]) {
      try {
        out[i] = fn(*in.chunks[i], static_cast<int>(w));
      } catch (...) {
        std::lock_guard lock(mu);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::size_t busy = 0;
  for (const auto& p : per_worker) busy += !p.empty();
  if (busy <= 1) {
    for (std::size_t w = 0; w < per_worker.size(); ++w) run(w);
  } else {
    std::vector<std::thread> ts;
    for (std::size_t w = 0; w < per_worker.size(); ++w)
      if (!per_worker[w].empty()) ts.emplace_back(run, w);
    for (auto& t : ts) t.join();
  }
  if (error) std::rethrow_exception(error);
  return out;
}

Array transform_chunks(const Array& in, const std::function<std::optional<Chunk>(const Chunk&, int)>& fn) {
  auto results = map_chunks(in, fn);
  Array out;
  out.schema = in.schema;
  out.n_workers = in.n_workers;
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (!results[i]) continue;
    out.chunks.push_back(std::make_shared<const Chunk>(std::move(*results[i])));
    out.placement.push_back(in.worker_of(i));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Predicate

namespace {

bool is_float_constant(const Expr::Node& n) {
  if (n.op == Expr::Op::constant) return !n.value.is_int();
  if (n.op == Expr::Op::neg) return is_float_constant(*n.args[0]);
  return false;
}

std::optional<CellValue> constant_of(const Expr::Node& n) {
  if (n.op == Expr::Op::constant) return n.value;
  if (n.op == Expr::Op::neg) {
    auto v = constant_of(*n.args[0]);
    if (!v) return std::nullopt;
    return v->is_int() ? CellValue(-v->as_int()) : CellValue(-v->as_double());
  }
  return std::nullopt;
}

void split_conjuncts(const std::shared_ptr<const Expr::Node>& n, std::vector<std::shared_ptr<const Expr::Node>>& out) {
  if (n->op == Expr::Op::logical_and) {
    split_conjuncts(n->args[0], out);
    split_conjuncts(n->args[1], out);
  } else {
    out.push_back(n);
  }
}

CellValue lowest(AttrKind k) {
  return k == AttrKind::int64 ? CellValue(std::numeric_limits<std::int64_t>::min())
                              : CellValue(-std::numeric_limits<double>::infinity());
}

CellValue highest(AttrKind k) {
  return k == AttrKind::int64 ? CellValue(std::numeric_limits<std::int64_t>::max())
                              : CellValue(std::numeric_limits<double>::infinity());
}

Expr::Op mirror(Expr::Op op) {
  switch (op) {
    case Expr::Op::lt: return Expr::Op::gt;
    case Expr::Op::le: return Expr::Op::ge;
    case Expr::Op::gt: return Expr::Op::lt;
    case Expr::Op::ge: return Expr::Op::le;
    default: return op;
  }
}

/// Range for `attr op c`, or nullopt when the comparison is not a range.
std::optional<AttrRange> to_range(const std::string& attr, AttrKind kind, Expr::Op op, CellValue c) {
  AttrRange r{attr, lowest(kind), highest(kind)};
  if (kind == AttrKind::int64) {
    const std::int64_t v = c.as_int();
    constexpr auto kMin = std::numeric_limits<std::int64_t>::min();
    constexpr auto kMax = std::numeric_limits<std::int64_t>::max();
    switch (op) {
      case Expr::Op::ge: r.lo = CellValue(v); break;
      case Expr::Op::gt:
        if (v == kMax) return std::nullopt;
        r.lo = CellValue(v + 1);
        break;
      case Expr::Op::le: r.hi = CellValue(v); break;
      case Expr::Op::lt:
        if (v == kMin) return std::nullopt;
        r.hi = CellValue(v - 1);
        break;
      case Expr::Op::eq: r.lo = r.hi = CellValue(v); break;
      default: return std::nullopt;
    }
    return r;
  }
  const double v = c.as_double();
  const double inf = std::numeric_limits<double>::infinity();
  switch (op) {
    case Expr::Op::ge: r.lo = CellValue(v); break;
    case Expr::Op::gt: r.lo = CellValue(std::nextafter(v, inf)); break;
    case Expr::Op::le: r.hi = CellValue(v); break;
    case Expr::Op::lt: r.hi = CellValue(std::nextafter(v, -inf)); break;
    case Expr::Op::eq: r.lo = r.hi = CellValue(v); break;
    default: return std::nullopt;
  }
  return r;
}

bool is_comparison(Expr::Op op) {
  return op == Expr::Op::lt || op == Expr::Op::le || op == Expr::Op::gt || op == Expr::Op::ge ||
         op == Expr::Op::eq || op == Expr::Op::ne;
}

}  // namespace

Predicate Predicate::parse(const ArraySchema& schema, std::string_view text) {
  Predicate p;
  const Expr e = Expr::parse(text);
  for (const auto& name : e.references()) {
    if (schema.dim_index(name))
      fail(Errc::schema, "FILTER accepts conditions on attributes only; '" + name + "' is a dimension");
    schema.require_attr(name);
  }
  std::vector<std::shared_ptr<const Expr::Node>> terms;
  split_conjuncts(std::make_shared<const Expr::Node>(e.root()), terms);
  std::shared_ptr<const Expr::Node> residual;
  for (const auto& t : terms) {
    std::optional<AttrRange> range;
    if (is_comparison(t->op)) {
      const auto& l = *t->args[0];
      const auto& r = *t->args[1];
      const Expr::Node* ref = nullptr;
      const Expr::Node* cst = nullptr;
      Expr::Op op = t->op;
      if (l.op == Expr::Op::ref && constant_of(r)) {
        ref = &l, cst = &r;
      } else if (r.op == Expr::Op::ref && constant_of(l)) {
        ref = &r, cst = &l, op = mirror(op);
      }
      if (ref) {
        const AttrKind kind = schema.attrs[schema.require_attr(ref->name)].kind;
        if (kind == AttrKind::int64 && is_float_constant(*cst))
          fail(Errc::schema, "float bound compared with integer attribute '" + ref->name + "'");
        range = to_range(ref->name, kind, op, *constant_of(*cst));
      }
    }
    if (range) {
      p.ranges.push_back(*range);
      continue;
    }
    if (!residual) {
      residual = t;
    } else {
      auto n = std::make_shared<Expr::Node>();
      n->op = Expr::Op::logical_and;
      n->args = {residual, t};
      residual = n;
    }
  }
  if (residual) p.residual = Expr(residual);
  return p;
}

void Predicate::validate(const ArraySchema& schema) const {
  for (const auto& r : ranges) {
    if (schema.dim_index(r.attr))
      fail(Errc::schema, "FILTER accepts conditions on attributes only; '" + r.attr + "' is a dimension");
    const AttrKind kind = schema.attrs[schema.require_attr(r.attr)].kind;
    if (kind == AttrKind::int64 && (!r.lo.is_int() || !r.hi.is_int()))
      fail(Errc::schema, "float bound on integer attribute '" + r.attr + "'");
  }
  if (!residual.empty()) {
    for (const auto& name : residual.references()) {
      if (schema.dim_index(name))
        fail(Errc::schema, "FILTER accepts conditions on attributes only; '" + name + "' is a dimension");
      schema.require_attr(name);
    }
  }
}

std::string Predicate::to_string() const {
  std::string out;
  auto add = [&](const std::string& s) {
    if (!out.empty()) out += " && ";
    out += s;
  };
  for (const auto& r : ranges) {
    const AttrKind k = r.lo.kind();
    if (r.lo == r.hi) {
      add(r.attr + " == " + r.lo.to_string());
      continue;
    }
    if (!(r.lo == lowest(k))) add(r.attr + " >= " + r.lo.to_string());
    if (!(r.hi == highest(k))) add(r.attr + " <= " + r.hi.to_string());
  }
  if (!residual.empty()) add(residual.to_string());
  return out.empty() ? "1" : out;
}

// ---------------------------------------------------------------------------
// SHIFT / REBOX

Array shift(const Array& in, std::span<const std::int64_t> offset) {
  if (offset.size() != in.schema.dims.size()) fail(Errc::domain, "shift offset dimensionality mismatch");
  Array out = in;
  const Box moved = in.schema.box().translated(offset);
  for (std::size_t d = 0; d < offset.size(); ++d) {
    out.schema.dims[d].lo = moved[d].lo;
    out.schema.dims[d].hi = moved[d].hi;
  }
  for (auto& cp : out.chunks) {
    Chunk c = *cp;
    c.box = c.box.translated(offset);
    for (std::size_t d = 0; d < offset.size(); ++d) {
      auto& z = c.dim_zone[d];
      if (z.empty()) continue;
      z.min = CellValue(z.min.as_int() + offset[d]);
      z.max = CellValue(z.max.as_int() + offset[d]);
    }
    cp = std::make_shared<const Chunk>(std::move(c));
  }
  return out;
}

namespace {

std::optional<Chunk> clip_chunk(const Chunk& c, const Box& box) {
  if (box.contains(c.box)) return c;
  auto sub = box_intersect(c.box, box);
  if (!sub) return std::nullopt;
  if (c.dense()) return slice_dense(c, *sub, c.id);
  std::vector<std::size_t> rows;
  const std::size_t n = c.rows();
  const std::size_t nd = c.dims();
  for (std::size_t r = 0; r < n; ++r) {
    bool inside = true;
    for (std::size_t d = 0; d < nd && inside; ++d) inside = (*sub)[d].contains(c.coord(r, d));
    if (inside) rows.push_back(r);
  }
  if (rows.empty()) return std::nullopt;
  return take_rows(c, rows, c.id);
}

ArraySchema clipped_schema(const ArraySchema& s, const Box& box) {
  ArraySchema out = s;
  auto sub = box_intersect(s.box(), box);
  const Box b = sub ? *sub : box;
  for (std::size_t d = 0; d < out.dims.size(); ++d) {
    out.dims[d].lo = b[d].lo;
    out.dims[d].hi = b[d].hi;
  }
  return out;
}

}  // namespace

Array rebox(const Array& in, const Box& box, ReboxMode mode) {
  if (box.dims() != in.schema.dims.size()) fail(Errc::domain, "rebox dimensionality mismatch");
  for (std::size_t d = 0; d < box.dims(); ++d)
    if (box[d].lo > box[d].hi) fail(Errc::domain, "rebox box " + box.to_string() + " is inverted");
  if (mode == ReboxMode::extend) {
    if (!box.contains(in.schema.box()))
      fail(Errc::mode, "extend rebox to " + box.to_string() + " would shrink " + in.schema.box().to_string());
    Array out = in;
    for (std::size_t d = 0; d < box.dims(); ++d) {
      out.schema.dims[d].lo = box[d].lo;
      out.schema.dims[d].hi = box[d].hi;
    }
    return out;
  }
  Array out = transform_chunks(in, [&](const Chunk& c, int) { return clip_chunk(c, box); });
  out.schema = clipped_schema(in.schema, box);
  return out;
}

Array rebox(const Catalog& catalog, const std::string& array, const Box& box, const ScanOptions& options) {
  Array loaded = load_array(catalog, array, box, {}, options);
  Array out = transform_chunks(loaded, [&](const Chunk& c, int) { return clip_chunk(c, box); });
  out.schema = clipped_schema(loaded.schema, box);
  return out;
}

// ---------------------------------------------------------------------------
// FILTER

namespace {

/// Clears bits of `valid` (over the given rows) where the range test fails.
void apply_range(const Column& col, const AttrRange& r, Bitmap& valid) {
  std::visit(
      [&](const auto& v) {
        using T = typename std::remove_cvref_t<decltype(v)>::value_type;
        T lo, hi;
        if constexpr (std::is_same_v<T, double>) {
          lo = r.lo.as_double();
          hi = r.hi.as_double();
        } else {
          lo = r.lo.as_int();
          hi = r.hi.as_int();
        }
        auto words = valid.words();
        for (std::size_t w = 0; w < words.size(); ++w) {
          std::uint64_t bits = words[w];
          std::uint64_t keep = bits;
          while (bits) {
            const int b = std::countr_zero(bits);
            const std::size_t i = w * 64 + static_cast<std::size_t>(b);
            if (v[i] < lo || v[i] > hi) keep &= ~(std::uint64_t{1} << b);
            bits &= bits - 1;
          }
          words[w] = keep;
        }
      },
      col);
}

bool truthy(const CellValue& v) { return v.is_int() ? v.as_int() != 0 : v.as_double() != 0.0; }

}  // namespace

Array filter(const Array& in, const Predicate& p, Diagnostics* diag) {
  p.validate(in.schema);
  return transform_chunks(in, [&](const Chunk& c, int) -> std::optional<Chunk> {
    std::vector<std::size_t> range_cols;
    for (const auto& r : p.ranges) {
      auto idx = c.attr_index(r.attr);
      if (!idx) fail(Errc::schema, "chunk lacks attribute '" + r.attr + "'");
      range_cols.push_back(*idx);
    }
    for (std::size_t i = 0; i < p.ranges.size(); ++i) {
      if (!c.attr_zone[range_cols[i]].overlaps(p.ranges[i].lo, p.ranges[i].hi)) {
        if (diag) ++diag->chunks_skipped;
        if (!c.dense()) return std::nullopt;
        Chunk out = c;
        out.validity = Bitmap(c.rows());
        compute_zones(out);
        return out;
      }
    }
    const std::size_t n = c.rows();
    Bitmap valid = c.dense() ? c.validity : Bitmap(n, true);
    for (std::size_t i = 0; i < p.ranges.size(); ++i) apply_range(*c.columns[range_cols[i]], p.ranges[i], valid);
    if (!p.residual.empty()) {
      const auto names = attr_names(c.attrs);
      const auto kinds = attr_kinds(c.attrs);
      BoundExpr be(p.residual, names, kinds);
      std::vector<CellValue> vars(names.size());
      std::vector<std::size_t> fails;
      valid.for_each_set([&](std::size_t r) {
        for (auto u : be.used()) vars[u] = c.value(u, r);
        try {
          if (!truthy(be.eval(vars))) fails.push_back(r);
        } catch (const ArithmeticFault&) {
          if (diag) ++diag->arithmetic_faults;
          fails.push_back(r);
        }
      });
      for (auto r : fails) valid.set(r, false);
    }
    if (c.dense()) {
      Chunk out = c;
      out.validity = std::move(valid);
      compute_zones(out);
      return out;
    }
    std::vector<std::size_t> rows;
    valid.for_each_set([&](std::size_t r) { rows.push_back(r); });
    if (rows.empty()) return std::nullopt;
    if (rows.size() == n) return c;
    return take_rows(c, rows, c.id, c.box);
  });
}

// ---------------------------------------------------------------------------
// FILL

Array fill(const Array& in, const std::map<std::string, CellValue>& defaults) {
  std::vector<CellValue> defs;
  for (const auto& a : in.schema.attrs) {
    auto it = defaults.find(a.name);
    if (it == defaults.end()) fail(Errc::config, "fill has no default for attribute '" + a.name + "'");
    defs.push_back(it->second.cast(a.kind));
  }
  Array out = transform_chunks(in, [&](const Chunk& c, int) -> std::optional<Chunk> {
    const std::size_t cells = c.box.volume();
    std::vector<ColumnPtr> cols;
    for (std::size_t a = 0; a < c.attrs.size(); ++a) {
      auto sa = in.schema.attr_index(c.attrs[a].name);
      const CellValue d = sa ? defs[*sa] : CellValue(std::int64_t{0}).cast(c.attrs[a].kind);
      Column col = std::visit(
          [&](const auto& src) -> Column {
            using T = typename std::remove_cvref_t<decltype(src)>::value_type;
            std::vector<T> v(cells, std::is_same_v<T, double> ? static_cast<T>(d.as_double()) : static_cast<T>(d.as_int()));
            if (c.dense()) {
              c.validity.for_each_set([&](std::size_t r) { v[r] = src[r]; });
            } else {
              const std::size_t n = c.rows();
              for (std::size_t r = 0; r < n; ++r) v[offset_in(c.box, c.coords(r))] = src[r];
            }
            return v;
          },
          *c.columns[a]);
      cols.push_back(std::make_shared<const Column>(std::move(col)));
    }
    return make_dense_chunk(c.id, c.box, c.attrs, std::move(cols), Bitmap(cells, true));
  });
  out.schema.density = Density::dense;
  return out;
}

// ---------------------------------------------------------------------------
// APPLY

Array apply(const Array& in, const std::string& name, const Expr& f, Diagnostics* diag) {
  if (in.schema.dim_index(name)) fail(Errc::schema, "APPLY target '" + name + "' is a dimension");
  const auto names = attr_names(in.schema.attrs);
  const auto kinds = attr_kinds(in.schema.attrs);
  const BoundExpr probe(f, names, kinds);
  const AttrKind result = probe.result_kind();

  Array out = transform_chunks(in, [&](const Chunk& c, int) -> std::optional<Chunk> {
    const auto cn = attr_names(c.attrs);
    const auto ck = attr_kinds(c.attrs);
    const BoundExpr be(f, cn, ck);
    const std::size_t n = c.rows();
    Column col = make_column(result, n);
    Bitmap valid = c.dense() ? c.validity : Bitmap(n, true);
    std::vector<CellValue> vars(cn.size());
    std::vector<std::size_t> faults;
    valid.for_each_set([&](std::size_t r) {
      for (auto u : be.used()) vars[u] = c.value(u, r);
      try {
        const CellValue v = be.eval(vars).cast(result);
        std::visit(
            [&](auto& dst) {
              using T = typename std::remove_cvref_t<decltype(dst)>::value_type;
              if constexpr (std::is_same_v<T, double>)
                dst[r] = v.as_double();
              else
                dst[r] = v.as_int();
            },
            col);
      } catch (const ArithmeticFault&) {
        if (diag) ++diag->arithmetic_faults;
        faults.push_back(r);
      }
    });
    for (auto r : faults) valid.set(r, false);

    Chunk o = c;
    auto existing = c.attr_index(name);
    auto ptr = std::make_shared<const Column>(std::move(col));
    if (existing) {
      o.attrs[*existing].kind = result;
      o.columns[*existing] = ptr;
    } else {
      o.attrs.push_back({name, result});
      o.columns.push_back(ptr);
    }
    if (c.dense()) {
      o.validity = std::move(valid);
      compute_zones(o);
      return o;
    }
    compute_zones(o);
    if (faults.empty()) return o;
    std::vector<std::size_t> rows;
    valid.for_each_set([&](std::size_t r) { rows.push_back(r); });
    if (rows.empty()) return std::nullopt;
    return take_rows(o, rows, o.id, o.box);
  });
  if (auto idx = out.schema.attr_index(name))
    out.schema.attrs[*idx].kind = result;
  else
    out.schema.attrs.push_back({name, result});
  return out;
}

// ---------------------------------------------------------------------------
// Binary operators

namespace {

struct BoxLess {
  bool operator()(const Box& a, const Box& b) const {
    for (std::size_t d = 0; d < std::min(a.dims(), b.dims()); ++d) {
      if (a[d].lo != b[d].lo) return a[d].lo < b[d].lo;
      if (a[d].hi != b[d].hi) return a[d].hi < b[d].hi;
    }
    return a.dims() < b.dims();
  }
};

/// Pairs each chunk of `a` with the chunk of `b` it overlaps. Overlapping
/// chunks must pair one-to-one, and two dense partners must share their box.
/// A chunk overlapping nothing (sparse arrays drop empty chunks and keep tight
/// boxes) gets a null partner.
std::vector<ChunkPtr> align(const Array& a, const Array& b, Errc code, const char* op) {
  auto misaligned = [&](const Box& box) {
    fail(code, std::string(op) + " inputs are not chunk-aligned at " + box.to_string());
  };
  std::vector<int> b_used(b.chunks.size(), 0);
  std::vector<ChunkPtr> out;
  for (const auto& c : a.chunks) {
    ChunkPtr partner;
    for (std::size_t j = 0; j < b.chunks.size(); ++j) {
      const auto& o = b.chunks[j];
      if (!boxes_overlap(o->box, c->box)) continue;
      if (partner || b_used[j]++) misaligned(c->box);
      if (c->dense() && o->dense() && !(c->box == o->box)) misaligned(c->box);
      partner = o;
    }
    out.push_back(partner);
  }
  return out;
}

/// Row of `c` holding `coords`, if valid.
class RowLookup {
 public:
  explicit RowLookup(const Chunk& c) : c_(c) {
    if (!c.dense()) {
      const std::size_t n = c.rows();
      index_.reserve(n);
      for (std::size_t r = 0; r < n; ++r) index_.emplace(c.coords(r), r);
    }
  }
  std::optional<std::size_t> find(const Coord& x) const {
    if (c_.dense()) {
      if (!c_.box.contains(x)) return std::nullopt;
      const auto off = offset_in(c_.box, x);
      return c_.validity.get(off) ? std::optional<std::size_t>(off) : std::nullopt;
    }
    auto it = index_.find(x);
    return it == index_.end() ? std::nullopt : std::optional<std::size_t>(it->second);
  }

 private:
  const Chunk& c_;
  std::unordered_map<Coord, std::size_t, CoordHash> index_;
};

/// (row in a, row in b) for cells valid in both.
std::vector<std::pair<std::size_t, std::size_t>> matching_rows(const Chunk& a, const Chunk& b) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  if (a.dense() && b.dense()) {
    Bitmap both = a.validity;
    auto w = both.words();
    auto bw = b.validity.words();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] &= bw[i];
    both.for_each_set([&](std::size_t r) { out.emplace_back(r, r); });
    return out;
  }
  if (a.dense()) {
    const RowLookup la(a);
    for (std::size_t r = 0, n = b.rows(); r < n; ++r)
      if (auto ra = la.find(b.coords(r))) out.emplace_back(*ra, r);
    std::sort(out.begin(), out.end());
    return out;
  }
  const RowLookup lb(b);
  for (std::size_t r = 0, n = a.rows(); r < n; ++r)
    if (auto rb = lb.find(a.coords(r))) out.emplace_back(r, *rb);
  return out;
}

/// Sparse chunk over `box` with the rows of `a` listed in `pairs` and the given columns.
Chunk sparse_from_pairs(const Chunk& a, const Box& box, std::int64_t id,
                        const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                        std::vector<AttributeSpec> attrs, std::vector<ColumnPtr> cols) {
  std::vector<std::vector<std::int64_t>> coords(box.dims());
  for (auto& v : coords) v.reserve(pairs.size());
  for (const auto& [ra, rb] : pairs) {
    const Coord x = a.coords(ra);
    for (std::size_t d = 0; d < box.dims(); ++d) coords[d].push_back(x[d]);
  }
  return make_sparse_chunk(id, box, std::move(attrs), coords, std::move(cols));
}

}  // namespace

Array combine(const Array& a, const Array& b, const Expr& g, Diagnostics* diag) {
  if (!(a.schema.box() == b.schema.box()))
    fail(Errc::shape, "COMBINE boxes differ: " + a.schema.box().to_string() + " vs " + b.schema.box().to_string());
  if (a.schema.attrs.size() != b.schema.attrs.size())
    fail(Errc::shape, "COMBINE inputs have different attribute counts");
  const auto partner = align(a, b, Errc::shape, "COMBINE");
  const std::vector<std::string> vars{"a", "b"};
  std::vector<AttributeSpec> attrs;
  for (std::size_t i = 0; i < a.schema.attrs.size(); ++i) {
    const std::vector<AttrKind> kinds{a.schema.attrs[i].kind, b.schema.attrs[i].kind};
    attrs.push_back({a.schema.attrs[i].name, BoundExpr(g, vars, kinds).result_kind()});
  }

  std::map<const Chunk*, ChunkPtr> partner_of;
  for (std::size_t i = 0; i < a.chunks.size(); ++i) partner_of[a.chunks[i].get()] = partner[i];

  Array out = transform_chunks(a, [&](const Chunk& ca, int) -> std::optional<Chunk> {
    const ChunkPtr pb = partner_of.at(&ca);
    if (!pb) return std::nullopt;
    const Chunk& cb = *pb;
    if (ca.attrs.size() != attrs.size() || cb.attrs.size() != attrs.size())
      fail(Errc::shape, "COMBINE chunk attribute count mismatch");
    auto pairs = matching_rows(ca, cb);
    const bool dense_out = ca.dense() && cb.dense();
    const std::size_t n = dense_out ? ca.rows() : pairs.size();
    std::vector<Column> cols;
    std::vector<BoundExpr> exprs;
    for (std::size_t i = 0; i < attrs.size(); ++i) {
      cols.push_back(make_column(attrs[i].kind, n));
      exprs.emplace_back(g, vars, std::vector<AttrKind>{ca.attrs[i].kind, cb.attrs[i].kind});
    }
    std::vector<bool> dead(pairs.size(), false);
    CellValue in[2];
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      const auto [ra, rb] = pairs[k];
      const std::size_t dst = dense_out ? ra : k;
      for (std::size_t i = 0; i < attrs.size() && !dead[k]; ++i) {
        in[0] = ca.value(i, ra);
        in[1] = cb.value(i, rb);
        try {
          const CellValue v = exprs[i].eval(in).cast(attrs[i].kind);
          std::visit(
              [&](auto& col) {
                using T = typename std::remove_cvref_t<decltype(col)>::value_type;
                if constexpr (std::is_same_v<T, double>)
                  col[dst] = v.as_double();
                else
                  col[dst] = v.as_int();
              },
              cols[i]);
        } catch (const ArithmeticFault&) {
          if (diag) ++diag->arithmetic_faults;
          dead[k] = true;
        }
      }
    }
    std::vector<ColumnPtr> ptrs;
    if (dense_out) {
      Bitmap valid(n);
      for (std::size_t k = 0; k < pairs.size(); ++k)
        if (!dead[k]) valid.set(pairs[k].first);
      for (auto& c : cols) ptrs.push_back(std::make_shared<const Column>(std::move(c)));
      return make_dense_chunk(ca.id, ca.box, attrs, std::move(ptrs), std::move(valid));
    }
    std::vector<std::pair<std::size_t, std::size_t>> live;
    std::vector<std::size_t> keep;
    for (std::size_t k = 0; k < pairs.size(); ++k)
      if (!dead[k]) live.push_back(pairs[k]), keep.push_back(k);
    for (auto& c : cols) ptrs.push_back(std::make_shared<const Column>(gather(c, keep)));
    if (live.empty()) return std::nullopt;
    return sparse_from_pairs(ca, ca.box, ca.id, live, attrs, std::move(ptrs));
  });
  out.schema.attrs = attrs;
  if (!(a.schema.density == Density::dense && b.schema.density == Density::dense))
    out.schema.density = Density::sparse;
  return out;
}

Array inner_djoin(const Array& a, const Array& b) {
  if (a.schema.dims.size() != b.schema.dims.size()) fail(Errc::schema, "INNERDJOIN inputs differ in dimensionality");
  const auto partner = align(a, b, Errc::unsupported, "INNERDJOIN");
  std::vector<AttributeSpec> attrs = a.schema.attrs;
  std::vector<std::string> b_names;
  auto taken = [&](const std::string& n) {
    return std::any_of(attrs.begin(), attrs.end(), [&](const auto& x) { return x.name == n; }) ||
           a.schema.dim_index(n).has_value();
  };
  for (const auto& at : b.schema.attrs) {
    std::string n = at.name;
    while (taken(n)) n += "_2";
    attrs.push_back({n, at.kind});
    b_names.push_back(n);
  }
  std::map<const Chunk*, ChunkPtr> partner_of;
  for (std::size_t i = 0; i < a.chunks.size(); ++i) partner_of[a.chunks[i].get()] = partner[i];

  Array out = transform_chunks(a, [&](const Chunk& ca, int) -> std::optional<Chunk> {
    const ChunkPtr pb = partner_of.at(&ca);
    if (!pb) return std::nullopt;
    const Chunk& cb = *pb;
    std::vector<AttributeSpec> cattrs = ca.attrs;
    for (const auto& at : cb.attrs) {
      auto idx = b.schema.attr_index(at.name);
      cattrs.push_back({idx ? b_names[*idx] : at.name + "_2", at.kind});
    }
    if (ca.dense() && cb.dense()) {
      Bitmap both = ca.validity;
      auto w = both.words();
      auto bw = cb.validity.words();
      for (std::size_t i = 0; i < w.size(); ++i) w[i] &= bw[i];
      std::vector<ColumnPtr> cols = ca.columns;
      cols.insert(cols.end(), cb.columns.begin(), cb.columns.end());
      return make_dense_chunk(ca.id, ca.box, cattrs, std::move(cols), std::move(both));
    }
    auto pairs = matching_rows(ca, cb);
    if (pairs.empty()) return std::nullopt;
    std::vector<std::size_t> ra, rb;
    for (const auto& [x, y] : pairs) ra.push_back(x), rb.push_back(y);
    std::vector<ColumnPtr> cols;
    for (const auto& c : ca.columns) cols.push_back(std::make_shared<const Column>(gather(*c, ra)));
    for (const auto& c : cb.columns) cols.push_back(std::make_shared<const Column>(gather(*c, rb)));
    return sparse_from_pairs(ca, ca.box, ca.id, pairs, cattrs, std::move(cols));
  });
  out.schema.attrs = attrs;
  if (!(a.schema.density == Density::dense && b.schema.density == Density::dense))
    out.schema.density = Density::sparse;
  return out;
}

// ---------------------------------------------------------------------------
// REDUCE

Table reduce(const Array& in, const std::vector<std::string>& keep_dims, const std::vector<AggSpec>& aggs,
             const GlaOptions& options, GlaStats* stats) {
  auto cfg = ReduceGla::configure(in.schema, keep_dims, aggs);
  auto run = run_gla<ReduceGla>(in, [cfg] { return ReduceGla(cfg); }, options);
  if (stats) *stats = std::move(run.stats);
  return std::move(run.result);
}

}  // namespace aql
