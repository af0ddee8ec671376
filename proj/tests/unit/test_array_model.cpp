#include <gtest/gtest.h>

#include "aql/array_model.hpp"
#include "testkit.hpp"

using namespace aql;

namespace {

bool raises(Errc code, const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code() == code;
  }
  return false;
}

}  // namespace

TEST(CellValue, MixedArithmeticPromotes) {
  EXPECT_TRUE((CellValue(3) + CellValue(4)).is_int());
  EXPECT_EQ((CellValue(3) + CellValue(4)).as_int(), 7);
  const auto m = CellValue(3) * CellValue(0.5);
  EXPECT_FALSE(m.is_int());
  EXPECT_DOUBLE_EQ(m.as_double(), 1.5);
  EXPECT_EQ((CellValue(7) / CellValue(2)).as_int(), 3);
  EXPECT_THROW(CellValue(1) / CellValue(0), ArithmeticFault);
  EXPECT_THROW(CellValue(1.0) / CellValue(0.0), ArithmeticFault);
}

TEST(CellValue, OrderingAcrossKinds) {
  EXPECT_LT(CellValue(1), CellValue(1.5));
  EXPECT_LT(CellValue(-2.5), CellValue(-2));
  EXPECT_EQ(CellValue(2), CellValue(2.0));
  EXPECT_EQ(CellValue(2.9).cast(AttrKind::int64).as_int(), 2);
}

TEST(Box, VolumeContainmentIntersection) {
  const Box a{{0, 9}, {0, 4}};
  const Box b{{5, 14}, {2, 2}};
  EXPECT_EQ(a.volume(), 50u);
  EXPECT_TRUE(a.contains(Coord{9, 4}));
  EXPECT_FALSE(a.contains(Coord{10, 0}));
  const auto i = box_intersect(a, b);
  ASSERT_TRUE(i);
  EXPECT_EQ(*i, (Box{{5, 9}, {2, 2}}));
  EXPECT_FALSE(box_intersect(a, Box{{10, 11}, {0, 4}}));
  EXPECT_TRUE(a.contains(Box{{1, 2}, {3, 4}}));
  const std::vector<std::int64_t> delta{3, -1};
  EXPECT_EQ(a.translated(delta), (Box{{3, 12}, {-1, 3}}));
}

TEST(Box, EmptyRangeHasNoCells) {
  int n = 0;
  for_each_cell(Box{{0, 3}, {1, 0}}, [&](const Coord&, std::uint64_t) { ++n; });
  EXPECT_EQ(n, 0);
}

TEST(Bitmap, SetGetCount) {
  Bitmap b(130);
  b.set(0);
  b.set(64);
  b.set(129);
  EXPECT_EQ(b.count(), 3u);
  b.set(64, false);
  EXPECT_FALSE(b.get(64));
  std::vector<std::size_t> seen;
  b.for_each_set([&](std::size_t i) { seen.push_back(i); });
  EXPECT_EQ(seen, (std::vector<std::size_t>{0, 129}));
}

TEST(Schema, ValidationErrors) {
  ArraySchema s{"a", {{"x", 0, 9}}, {{"v", AttrKind::int64}}, Density::dense, {}};
  EXPECT_NO_THROW(s.validate());
  auto bad = s;
  bad.dims.push_back({"x", 0, 1});
  EXPECT_TRUE(raises(Errc::schema, [&] { bad.validate(); }));
  bad = s;
  bad.dims[0].hi = -1;
  EXPECT_TRUE(raises(Errc::schema, [&] { bad.validate(); }));
  bad = s;
  bad.dims.clear();
  EXPECT_TRUE(raises(Errc::schema, [&] { bad.validate(); }));
  bad = s;
  for (int d = 0; d < 9; ++d) bad.dims.push_back({"e" + std::to_string(d), 0, 0});
  EXPECT_TRUE(raises(Errc::schema, [&] { bad.validate(); }));
  EXPECT_TRUE(raises(Errc::schema, [&] { s.require_attr("nope"); }));
}

TEST(Chunk, DenseConstructionChecks) {
  ArraySchema s{"a", {{"x", 0, 3}, {"y", 0, 3}}, {{"v", AttrKind::int64}}, Density::dense, {}};
  std::vector<Column> cols{std::vector<std::int64_t>(4, 1)};
  auto c = make_dense_chunk(s, 0, Box{{0, 1}, {0, 1}}, cols, Bitmap(4, true));
  EXPECT_EQ(c.rows(), 4u);
  EXPECT_EQ(c.valid_count(), 4u);
  EXPECT_TRUE(raises(Errc::schema, [&] { make_dense_chunk(s, 0, Box{{0, 2}, {0, 1}}, cols, Bitmap(6, true)); }));
  EXPECT_TRUE(raises(Errc::domain, [&] { make_dense_chunk(s, 0, Box{{3, 4}, {0, 1}}, cols, Bitmap(4, true)); }));
}

TEST(Chunk, DimensionSuppressionSavesCoordinatePayload) {
  // A dense chunk stores attribute payload only; the explicit form adds one
  // coordinate column per dimension.
  ArraySchema s{"a", {{"x", 0, 9}, {"y", 0, 9}}, {{"v", AttrKind::int64}}, Density::dense, {}};
  aqltest::Rng rng(3);
  auto whole = aqltest::random_whole(rng, s, 1.0, 10);
  const auto sparse = to_sparse(whole);
  EXPECT_EQ(whole.payload_bytes(), 100u * 8);
  EXPECT_EQ(sparse.payload_bytes(), 100u * 8);
  EXPECT_EQ(sparse.dim_offsets.size(), 2u);
}

// Property: cell_offset and cell_coords are inverse over random boxes.
TEST(ChunkProperty, OffsetCoordsRoundTrip) {
  aqltest::Rng rng(11);
  for (int it = 0; it < 200; ++it) {
    const auto nd = static_cast<std::size_t>(rng.range(1, 4));
    std::vector<Range> rs;
    for (std::size_t d = 0; d < nd; ++d) {
      const auto lo = rng.range(-20, 20);
      rs.push_back({lo, lo + rng.range(0, 6)});
    }
    const Box box(rs);
    std::uint64_t expect = 0;
    for_each_cell(box, [&](const Coord& c, std::uint64_t off) {
      ASSERT_EQ(off, expect++);
      ASSERT_EQ(offset_in(box, c), off);
      ASSERT_EQ(coords_in(box, off), c);
    });
    ASSERT_EQ(expect, box.volume());
  }
}

// Property: to_sparse keeps exactly the valid cells; slice_dense keeps the sub-box cells.
TEST(ChunkProperty, SparseAndSliceKeepCells) {
  aqltest::Rng rng(12);
  aqltest::GenOptions o;
  for (int it = 0; it < 150; ++it) {
    const auto s = aqltest::random_schema(rng, o);
    const auto whole = aqltest::random_whole(rng, s, rng.real(0, 1), 20);
    const auto all = aqltest::cells_of_chunk(whole);
    const auto sp = to_sparse(whole);
    ASSERT_EQ(aqltest::diff(aqltest::cells_of_chunk(sp), all), "");
    std::vector<Range> sub;
    for (const auto& d : s.dims) {
      const auto a = rng.range(d.lo, d.hi), b = rng.range(d.lo, d.hi);
      sub.push_back({std::min(a, b), std::max(a, b)});
    }
    const Box sb(sub);
    const auto sl = slice_dense(whole, sb, 1);
    aqltest::CellMap want;
    for (const auto& [c, v] : all)
      if (sb.contains(c)) want.emplace(c, v);
    ASSERT_EQ(aqltest::diff(aqltest::cells_of_chunk(sl), want), "");
  }
}

TEST(ChunkProperty, ZonesBoundValidCells) {
  aqltest::Rng rng(13);
  for (int it = 0; it < 100; ++it) {
    const auto s = aqltest::random_schema(rng, {});
    auto whole = aqltest::random_whole(rng, s, rng.real(0, 1), 30);
    compute_zones(whole);
    ASSERT_EQ(whole.attr_zone.size(), s.attrs.size());
    for (const auto& [c, v] : aqltest::cells_of_chunk(whole)) {
      for (std::size_t k = 0; k < v.size(); ++k) {
        ASSERT_LE(whole.attr_zone[k].min, v[k]);
        ASSERT_LE(v[k], whole.attr_zone[k].max);
      }
      for (std::size_t d = 0; d < c.size(); ++d) {
        ASSERT_LE(whole.dim_zone[d].min, CellValue(c[d]));
        ASSERT_LE(CellValue(c[d]), whole.dim_zone[d].max);
      }
    }
    if (whole.valid_count() == 0)
      for (const auto& z : whole.attr_zone) ASSERT_TRUE(z.empty());
  }
}

TEST(ChunkProperty, TakeRowsTightBox) {
  aqltest::Rng rng(14);
  for (int it = 0; it < 100; ++it) {
    const auto s = aqltest::random_schema(rng, {});
    const auto sp = to_sparse(aqltest::random_whole(rng, s, 0.5, 10));
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < sp.rows(); ++r)
      if (rng.coin()) rows.push_back(r);
    const auto t = take_rows(sp, rows, 5);
    ASSERT_EQ(t.rows(), rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      ASSERT_EQ(t.coords(i), sp.coords(rows[i]));
      ASSERT_TRUE(t.box.contains(t.coords(i)));
    }
    if (!rows.empty())
      for (std::size_t d = 0; d < t.dims(); ++d) {
        std::int64_t lo = INT64_MAX, hi = INT64_MIN;
        for (std::size_t i = 0; i < t.rows(); ++i) {
          lo = std::min(lo, t.coord(i, d));
          hi = std::max(hi, t.coord(i, d));
        }
        ASSERT_EQ(t.box[d].lo, lo);
        ASSERT_EQ(t.box[d].hi, hi);
      }
  }
}
