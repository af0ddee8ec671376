#include <gtest/gtest.h>

#include "aql/algebra.hpp"
#include "testkit.hpp"

using namespace aql;
using aqltest::CellMap;

namespace {

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::internal;
}

CellValue absval(const CellValue& v) { return v < CellValue(0) ? CellValue(0) - v : v; }

struct UnaryCase {
  const char* text;
  std::function<std::optional<CellValue>(const CellValue&)> f;
};

const std::vector<UnaryCase>& unary_cases() {
  static const std::vector<UnaryCase> cases{
      {"a0 * 2 + 1", [](const CellValue& a) { return a * CellValue(2) + CellValue(1); }},
      {"a0 - 3", [](const CellValue& a) { return a - CellValue(3); }},
      {"abs(a0)", [](const CellValue& a) { return absval(a); }},
      {"min(a0, 7)", [](const CellValue& a) { return a < CellValue(7) ? a : CellValue(7); }},
      {"max(a0, -2) * a0", [](const CellValue& a) { return (a < CellValue(-2) ? CellValue(-2) : a) * a; }},
      {"100 / a0",
       [](const CellValue& a) -> std::optional<CellValue> {
         if (a.as_double() == 0.0) return std::nullopt;
         return CellValue(100) / a;
       }},
      {"a0 >= 4", [](const CellValue& a) { return CellValue(a >= CellValue(4) ? 1 : 0); }},
  };
  return cases;
}

struct BinaryCase {
  const char* text;
  std::function<CellValue(const CellValue&, const CellValue&)> f;
};

const std::vector<BinaryCase>& binary_cases() {
  static const std::vector<BinaryCase> cases{
      {"a + b", [](const CellValue& a, const CellValue& b) { return a + b; }},
      {"a * b - a", [](const CellValue& a, const CellValue& b) { return a * b - a; }},
      {"max(a, b)", [](const CellValue& a, const CellValue& b) { return a < b ? b : a; }},
  };
  return cases;
}

}  // namespace

// Property: FILTER keeps exactly the cells satisfying the predicate.
TEST(AlgebraProperty, FilterMatchesOracle) {
  aqltest::Rng rng(101);
  for (int it = 0; it < 200; ++it) {
    const auto g = aqltest::random_array(rng);
    const auto lo = rng.range(-50, 40), hi = lo + rng.range(0, 50);
    const bool residual = rng.coin();
    std::string text = "a0 >= " + std::to_string(lo) + " && a0 <= " + std::to_string(hi);
    if (residual) text += " && a0 * 2 != " + std::to_string(lo * 2);
    const auto p = Predicate::parse(g.array.schema, text);
    EXPECT_EQ(p.ranges.size(), 2u);
    EXPECT_EQ(!p.residual.empty(), residual);
    Diagnostics diag;
    const Array out = filter(g.array, p, &diag);
    CellMap want;
    for (const auto& [c, v] : aqltest::cells(g.array)) {
      const auto x = v[0];
      if (x < CellValue(lo) || CellValue(hi) < x) continue;
      if (residual && x * CellValue(2) == CellValue(lo * 2)) continue;
      want.emplace(c, v);
    }
    ASSERT_EQ(aqltest::diff(aqltest::cells(out), want), "") << text;
  }
}

TEST(Algebra, FilterRejectsDimensionsAndFloatBoundsOnIntegers) {
  ArraySchema s{"f", {{"x", 0, 3}}, {{"v", AttrKind::int64}, {"w", AttrKind::float64}}, Density::dense, {}};
  EXPECT_EQ(code_of([&] { Predicate::parse(s, "x > 2"); }), Errc::schema);
  EXPECT_EQ(code_of([&] { Predicate::parse(s, "v > 2.5"); }), Errc::schema);
  EXPECT_EQ(code_of([&] { Predicate::parse(s, "zz > 2"); }), Errc::schema);
  EXPECT_NO_THROW(Predicate::parse(s, "w > 2.5 && v <= 3"));
}

TEST(Algebra, FilterSkipsChunksByZone) {
  ArraySchema s{"z", {{"x", 0, 7}}, {{"v", AttrKind::int64}}, Density::dense, {}};
  std::vector<std::int64_t> vals{1, 1, 1, 1, 9, 9, 9, 9};
  auto whole = make_dense_chunk(s, 0, s.box(), {vals}, Bitmap(8, true));
  const auto a = aqltest::assemble(s, whole, {4}, false, 2);
  Diagnostics d;
  const auto out = filter(a, Predicate::parse(s, "v >= 5"), &d);
  EXPECT_EQ(d.chunks_skipped.load(), 1u);
  EXPECT_EQ(out.valid_cells(), 4u);
}

// Property: APPLY evaluates the expression cell-wise; faults invalidate cells.
TEST(AlgebraProperty, ApplyMatchesOracle) {
  aqltest::Rng rng(102);
  for (int it = 0; it < 200; ++it) {
    const auto g = aqltest::random_array(rng);
    const auto& cs = unary_cases()[static_cast<std::size_t>(it) % unary_cases().size()];
    const std::string name = rng.coin() ? "out" : "a0";
    Diagnostics diag;
    const Array out = apply(g.array, name, Expr::parse(cs.text), &diag);
    std::vector<std::string> names = attr_names(g.array.schema.attrs);
    const bool replaces = name == "a0";
    if (!replaces) names.push_back(name);
    CellMap want;
    std::uint64_t faults = 0;
    for (const auto& [c, v] : aqltest::cells(g.array)) {
      auto r = cs.f(v[0]);
      if (!r) {
        ++faults;
        continue;
      }
      auto row = v;
      if (replaces)
        row[0] = *r;
      else
        row.push_back(*r);
      want.emplace(c, row);
    }
    ASSERT_EQ(aqltest::diff(aqltest::cells(out, names), want), "") << cs.text;
    ASSERT_EQ(diag.arithmetic_faults.load(), faults);
  }
}

// Property: COMBINE is valid where both inputs are and applies g per attribute pair.
TEST(AlgebraProperty, CombineMatchesOracle) {
  aqltest::Rng rng(103);
  for (int it = 0; it < 200; ++it) {
    aqltest::GenOptions o;
    const auto g = aqltest::random_array(rng, o, "left");
    const Array b = aqltest::random_aligned(rng, g, "right");
    const auto& cs = binary_cases()[static_cast<std::size_t>(it) % binary_cases().size()];
    const Array out = combine(g.array, b, Expr::parse(cs.text));
    const auto ca = aqltest::cells(g.array), cb = aqltest::cells(b);
    CellMap want;
    for (const auto& [c, va] : ca) {
      auto it2 = cb.find(c);
      if (it2 == cb.end()) continue;
      std::vector<CellValue> row;
      for (std::size_t k = 0; k < va.size(); ++k) row.push_back(cs.f(va[k], it2->second[k]));
      want.emplace(c, row);
    }
    ASSERT_EQ(aqltest::diff(aqltest::cells(out), want), "") << cs.text;
  }
}

TEST(Algebra, CombineShapeMismatch) {
  aqltest::Rng rng(104);
  aqltest::GenOptions o;
  o.min_dims = o.max_dims = 2;
  o.sparse_prob = 0;
  const auto g = aqltest::random_array(rng, o, "l");
  auto other = g.array;
  other.schema.dims[0].hi += 1;
  EXPECT_EQ(code_of([&] { combine(g.array, other, Expr::parse("a + b")); }), Errc::shape);
}

// Property: INNERDJOIN concatenates attributes of cells valid on both sides.
TEST(AlgebraProperty, InnerDjoinMatchesOracle) {
  aqltest::Rng rng(105);
  for (int it = 0; it < 200; ++it) {
    const auto g = aqltest::random_array(rng, {}, "left");
    std::vector<AttributeSpec> battrs{{"a0", AttrKind::int64}, {"b1", AttrKind::float64}};
    const Array b = aqltest::random_aligned(rng, g, "right", 50, battrs);
    const Array out = inner_djoin(g.array, b);
    ASSERT_EQ(out.schema.attrs.size(), g.array.schema.attrs.size() + 2);
    EXPECT_EQ(out.schema.attrs[g.array.schema.attrs.size()].name, "a0_2");
    const auto ca = aqltest::cells(g.array), cb = aqltest::cells(b);
    CellMap want;
    for (const auto& [c, va] : ca) {
      auto f = cb.find(c);
      if (f == cb.end()) continue;
      auto row = va;
      row.insert(row.end(), f->second.begin(), f->second.end());
      want.emplace(c, row);
    }
    ASSERT_EQ(aqltest::diff(aqltest::cells(out, attr_names(out.schema.attrs)), want), "");
  }
}

TEST(Algebra, InnerDjoinNeedsAlignedChunks) {
  ArraySchema s{"j", {{"x", 0, 7}}, {{"v", AttrKind::int64}}, Density::dense, {}};
  aqltest::Rng rng(106);
  const auto whole = aqltest::random_whole(rng, s, 1.0, 5);
  const auto a = aqltest::assemble(s, whole, {4}, false, 1);
  const auto b = aqltest::assemble(s, whole, {2}, false, 1);
  EXPECT_EQ(code_of([&] { inner_djoin(a, b); }), Errc::unsupported);
}

// Property: REBOX clip keeps cells inside the box; SHIFT translates them.
TEST(AlgebraProperty, ReboxAndShiftMatchOracle) {
  aqltest::Rng rng(107);
  for (int it = 0; it < 200; ++it) {
    const auto g = aqltest::random_array(rng);
    std::vector<Range> rs;
    for (const auto& d : g.array.schema.dims) {
      const auto a = rng.range(d.lo - 2, d.hi + 2), b = rng.range(d.lo - 2, d.hi + 2);
      rs.push_back({std::min(a, b), std::max(a, b)});
    }
    const Box box(rs);
    const auto all = aqltest::cells(g.array);
    CellMap want;
    for (const auto& [c, v] : all)
      if (box.contains(c)) want.emplace(c, v);
    const Array clipped = rebox(g.array, box);
    ASSERT_EQ(aqltest::diff(aqltest::cells(clipped), want), "");
    for (const auto& c : clipped.chunks) ASSERT_TRUE(box.contains(c->box));

    std::vector<std::int64_t> delta;
    for (std::size_t d = 0; d < box.dims(); ++d) delta.push_back(rng.range(-100, 100));
    const Array moved = shift(g.array, delta);
    CellMap shifted;
    for (const auto& [c, v] : all) {
      Coord n = c;
      for (std::size_t d = 0; d < c.size(); ++d) n[d] += delta[d];
      shifted.emplace(n, v);
    }
    ASSERT_EQ(aqltest::diff(aqltest::cells(moved), shifted), "");
    for (std::size_t d = 0; d < box.dims(); ++d)
      ASSERT_EQ(moved.schema.dims[d].lo, g.array.schema.dims[d].lo + delta[d]);
  }
}

TEST(Algebra, ReboxExtendRequiresContainment) {
  aqltest::Rng rng(108);
  aqltest::GenOptions o;
  o.min_dims = o.max_dims = 1;
  const auto g = aqltest::random_array(rng, o);
  const auto& d = g.array.schema.dims[0];
  const Array bigger = rebox(g.array, Box{{d.lo - 5, d.hi + 5}}, ReboxMode::extend);
  EXPECT_EQ(bigger.schema.dims[0].lo, d.lo - 5);
  EXPECT_EQ(aqltest::diff(aqltest::cells(bigger), aqltest::cells(g.array)), "");
  EXPECT_EQ(code_of([&] { rebox(g.array, Box{{d.lo + 1, d.hi}}, ReboxMode::extend); }), Errc::mode);
}

TEST(Algebra, ShiftOverflowIsDomainError) {
  ArraySchema s{"o", {{"x", 0, 3}}, {{"v", AttrKind::int64}}, Density::dense, {}};
  aqltest::Rng rng(109);
  const auto a = aqltest::assemble(s, aqltest::random_whole(rng, s, 1.0, 5), {2}, false, 1);
  const std::vector<std::int64_t> big{std::numeric_limits<std::int64_t>::max()};
  EXPECT_EQ(code_of([&] { shift(a, big); }), Errc::domain);
}

// Property: FILL makes every cell of each chunk box valid.
TEST(AlgebraProperty, FillMatchesOracle) {
  aqltest::Rng rng(110);
  for (int it = 0; it < 100; ++it) {
    const auto g = aqltest::random_array(rng);
    std::map<std::string, CellValue> defaults;
    for (const auto& a : g.array.schema.attrs) defaults[a.name] = CellValue(-999);
    const Array out = fill(g.array, defaults);
    const auto all = aqltest::cells(g.array);
    CellMap want;
    for (const auto& c : g.array.chunks) {
      for_each_cell(c->box, [&](const Coord& k, std::uint64_t) {
        auto f = all.find(k);
        if (f != all.end()) {
          want.emplace(k, f->second);
        } else {
          std::vector<CellValue> row;
          for (const auto& a : g.array.schema.attrs) row.push_back(CellValue(-999).cast(a.kind));
          want.emplace(k, row);
        }
      });
    }
    ASSERT_EQ(aqltest::diff(aqltest::cells(out), want), "");
    for (const auto& c : out.chunks) ASSERT_TRUE(c->dense());
  }
  aqltest::Rng r2(111);
  const auto g = aqltest::random_array(r2);
  EXPECT_EQ(code_of([&] { fill(g.array, {}); }), Errc::config);
}

// Property: REDUCE equals the grouped naive aggregate.
TEST(AlgebraProperty, ReduceMatchesOracle) {
  aqltest::Rng rng(112);
  const std::vector<AggKind> kinds{AggKind::sum, AggKind::count, AggKind::avg, AggKind::min, AggKind::max,
                                   AggKind::count_distinct};
  for (int it = 0; it < 200; ++it) {
    const auto g = aqltest::random_array(rng);
    const auto& s = g.array.schema;
    std::vector<std::string> keep;
    std::vector<std::size_t> keep_idx;
    for (std::size_t d = 0; d < s.dims.size(); ++d)
      if (rng.coin(0.4)) {
        keep.push_back(s.dims[d].name);
        keep_idx.push_back(d);
      }
    std::vector<AggSpec> aggs;
    const auto n_aggs = rng.range(1, 3);
    for (std::int64_t k = 0; k < n_aggs; ++k) {
      AggSpec a;
      const auto& attr = s.attrs[static_cast<std::size_t>(rng.range(0, static_cast<std::int64_t>(s.attrs.size()) - 1))];
      a.kind = rng.pick(kinds);
      if (a.kind == AggKind::count_distinct && attr.kind == AttrKind::float64) a.kind = AggKind::max;
      a.attr = a.kind == AggKind::count && rng.coin() ? "" : attr.name;
      a.output = "o" + std::to_string(k);
      aggs.push_back(a);
    }
    GlaOptions opt;
    opt.tree = AggregationTree::build(AggregationTree::Shape::balanced_binary, g.array.n_workers);
    const Table t = reduce(g.array, keep, aggs, opt);
    const auto want = aqltest::reduce_oracle(g.array, keep_idx, aggs);
    ASSERT_EQ(t.rows.size(), want.size());
    ASSERT_EQ(t.key_names, keep);
    std::size_t i = 0;
    for (const auto& [k, vals] : want) {
      const auto& row = t.rows[i++];
      ASSERT_EQ(row.key, k);
      for (std::size_t a = 0; a < vals.size(); ++a) {
        ASSERT_TRUE(vals[a].has_value());
        ASSERT_TRUE(aqltest::close(row.values[a], *vals[a])) << row.values[a].to_string() << " vs " << vals[a]->to_string();
      }
    }
  }
}

TEST(Algebra, ReduceOnEmptyInputHasNoRows) {
  ArraySchema s{"e", {{"x", 0, 3}}, {{"v", AttrKind::int64}}, Density::dense, {}};
  aqltest::Rng rng(113);
  const auto a = aqltest::assemble(s, aqltest::random_whole(rng, s, 0.0, 5), {2}, false, 2);
  const Table t = reduce(a, {}, {AggSpec{AggKind::sum, "v", "", nullptr}});
  EXPECT_TRUE(t.rows.empty());
  EXPECT_EQ(code_of([&] { reduce(a, {"nope"}, {AggSpec{AggKind::sum, "v", "", nullptr}}); }), Errc::schema);
}

TEST(Algebra, ResultsDoNotDependOnWorkerCount) {
  aqltest::Rng rng(114);
  for (int it = 0; it < 30; ++it) {
    auto g = aqltest::random_array(rng);
    const std::vector<AggSpec> aggs{{AggKind::avg, "a0", "", nullptr}, {AggKind::count, "", "", nullptr}};
    std::optional<Table> first;
    for (int w : {1, 2, 4, 8}) {
      Array a = g.array;
      a.n_workers = w;
      std::vector<std::int64_t> ids;
      for (const auto& c : a.chunks) ids.push_back(c->id);
      a.placement = place_chunks(ids, w);
      GlaOptions opt;
      opt.tree = AggregationTree::build(AggregationTree::Shape::chain, w);
      Table t = reduce(a, {}, aggs, opt);
      if (!first) {
        first = t;
        continue;
      }
      ASSERT_EQ(t.rows.size(), first->rows.size());
      for (std::size_t r = 0; r < t.rows.size(); ++r)
        for (std::size_t k = 0; k < aggs.size(); ++k) ASSERT_EQ(t.rows[r].values[k], first->rows[r].values[k]);
    }
  }
}
