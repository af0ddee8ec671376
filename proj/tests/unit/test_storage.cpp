#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <mutex>

#include <unistd.h>

#include "aql/storage.hpp"
#include "testkit.hpp"

using namespace aql;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> n{0};
    path_ = fs::temp_directory_path() / ("aql_storage_" + std::to_string(::getpid()) + "_" + std::to_string(n++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void store(Catalog& cat, const Array& a) {
  cat.create_array(a.schema, a.n_workers);
  for (std::size_t i = 0; i < a.chunks.size(); ++i) cat.put_chunk(a.schema.name, *a.chunks[i], a.worker_of(i));
  cat.commit(a.schema.name);
}

}  // namespace

TEST(Chunking, RegularCounts) {
  EXPECT_EQ(regular_chunk_count(Box{{0, 7499}, {0, 7499}}, std::vector<std::int64_t>{750, 750}), 100u);
  EXPECT_EQ(regular_chunk_count(Box{{0, 9}}, std::vector<std::int64_t>{3}), 4u);
  const auto boxes = regular_chunk_boxes(Box{{0, 9}}, std::vector<std::int64_t>{3});
  ASSERT_EQ(boxes.size(), 4u);
  EXPECT_EQ(boxes.back(), (Box{{9, 9}}));
}

TEST(Chunking, PlacementRoundRobin) {
  const std::vector<std::int64_t> ids{0, 1, 2, 3, 4, 5, 6};
  EXPECT_EQ(place_chunks(ids, 3), (std::vector<int>{0, 1, 2, 0, 1, 2, 0}));
  const auto r1 = place_chunks(ids, 3, PlacementPolicy::random, 9);
  EXPECT_EQ(r1, place_chunks(ids, 3, PlacementPolicy::random, 9));
  for (int w : r1) EXPECT_TRUE(w >= 0 && w < 3);
}

// Property: chunking partitions the cells exactly, for both layouts and strategies.
TEST(ChunkingProperty, PartitionsCells) {
  aqltest::Rng rng(21);
  for (int it = 0; it < 150; ++it) {
    const auto s = aqltest::random_schema(rng, {});
    const auto whole = aqltest::random_whole(rng, s, rng.real(0, 1), 10);
    const auto want = aqltest::cells_of_chunk(whole);
    const auto shape = aqltest::random_chunk_shape(rng, s);
    const auto strategy = rng.coin() ? ChunkingStrategy::regular(shape)
                                     : ChunkingStrategy::irregular(static_cast<std::uint64_t>(rng.range(1, 200)));
    const auto parts = strategy.kind == ChunkingStrategy::Kind::regular && rng.coin()
                           ? chunk_array(s, whole, strategy)
                           : chunk_array(s, to_sparse(whole), strategy);
    aqltest::CellMap got;
    for (const auto& c : parts) {
      ASSERT_TRUE(s.box().contains(c.box));
      for (auto& [k, v] : aqltest::cells_of_chunk(c)) ASSERT_TRUE(got.emplace(k, v).second);
      if (strategy.kind == ChunkingStrategy::Kind::irregular) ASSERT_LE(c.rows(), strategy.target_cells);
    }
    ASSERT_EQ(aqltest::diff(got, want), "");
  }
}

TEST(ChunkFile, DenseAndSparseRoundTrip) {
  TempDir dir;
  aqltest::Rng rng(22);
  for (int it = 0; it < 60; ++it) {
    const auto s = aqltest::random_schema(rng, {});
    auto c = aqltest::random_whole(rng, s, rng.real(0, 1), 40);
    if (rng.coin()) c = to_sparse(c);
    compute_zones(c);
    c.id = it;
    const auto path = dir.path() / "c.chk";
    IoStats io;
    const auto written = write_chunk(c, path);
    EXPECT_EQ(written, fs::file_size(path));
    const Chunk back = read_chunk(path, s.attrs, std::nullopt, &io, it, s.dims);
    ASSERT_TRUE(same_chunk(c, back));
    EXPECT_EQ(io.bytes_read.load(), written);
    EXPECT_EQ(io.chunks_read.load(), 1u);
  }
}

TEST(ChunkFile, ProjectionReadsOnlyRequestedColumns) {
  TempDir dir;
  ArraySchema s{"p", {{"x", 0, 31}, {"y", 0, 31}}, {}, Density::dense, {}};
  for (int a = 0; a < 5; ++a) s.attrs.push_back({"v" + std::to_string(a), AttrKind::int64});
  aqltest::Rng rng(23);
  const auto c = aqltest::random_whole(rng, s, 1.0, 9);
  const auto path = dir.path() / "p.chk";
  const auto total = write_chunk(c, path);
  IoStats one, two;
  const auto a = read_chunk(path, s.attrs, std::vector<std::string>{"v2"}, &one);
  const auto b = read_chunk(path, s.attrs, std::vector<std::string>{"v1", "v3"}, &two);
  ASSERT_EQ(a.attrs.size(), 1u);
  EXPECT_EQ(a.attrs[0].name, "v2");
  EXPECT_EQ(b.attrs.size(), 2u);
  const std::uint64_t column = 32 * 32 * 8;
  EXPECT_EQ(two.bytes_read - one.bytes_read, column);
  EXPECT_LT(one.bytes_read.load(), total - 3 * column);
  for (std::size_t r = 0; r < c.rows(); ++r) EXPECT_EQ(a.value(0, r), c.value(2, r));
  // Dimension names are accepted and free.
  IoStats three;
  read_chunk(path, s.attrs, std::vector<std::string>{"x", "v2"}, &three, 0, s.dims);
  EXPECT_EQ(three.bytes_read.load(), one.bytes_read.load());
}

TEST(ChunkFile, CorruptFilesAreFormatErrors) {
  TempDir dir;
  ArraySchema s{"p", {{"x", 0, 3}}, {{"v", AttrKind::int64}}, Density::dense, {}};
  aqltest::Rng rng(24);
  const auto path = dir.path() / "bad.chk";
  write_chunk(aqltest::random_whole(rng, s, 1.0, 5), path);
  fs::resize_file(path, fs::file_size(path) - 5);
  try {
    read_chunk(path, s.attrs);
    FAIL() << "truncated file accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::format);
  }
  std::ofstream(path, std::ios::binary) << "garbage";
  EXPECT_THROW(read_chunk(path, s.attrs), Error);
}

TEST(Catalog, PersistsAndReopens) {
  TempDir dir;
  aqltest::Rng rng(25);
  const auto g = aqltest::random_array(rng, {}, "arr");
  {
    Catalog cat(dir.path());
    store(cat, g.array);
  }
  Catalog again(dir.path());
  ASSERT_TRUE(again.has("arr"));
  EXPECT_EQ(again.entry("arr").chunks.size(), g.array.chunks.size());
  const auto loaded = load_array(again, "arr");
  EXPECT_EQ(aqltest::diff(aqltest::cells(loaded), aqltest::cells(g.array)), "");
  try {
    again.entry("missing");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::catalog);
  }
}

TEST(Catalog, DuplicateChunkIdsRejected) {
  TempDir dir;
  Catalog cat(dir.path());
  ArraySchema s{"d", {{"x", 0, 3}}, {{"v", AttrKind::int64}}, Density::dense, {}};
  aqltest::Rng rng(26);
  const auto c = aqltest::random_whole(rng, s, 1.0, 5);
  cat.create_array(s, 1);
  cat.put_chunk("d", c, 0);
  cat.put_chunk("d", c, 0);
  EXPECT_THROW(cat.commit("d"), Error);
}

// Property: prune() returns exactly the chunks an exhaustive scan finds
// overlapping the range (box, dimension zones, attribute zones).
TEST(CatalogProperty, PruneMatchesExhaustiveScan) {
  TempDir dir;
  Catalog cat(dir.path());
  aqltest::Rng rng(27);
  for (int it = 0; it < 30; ++it) {
    aqltest::GenOptions o;
    o.max_attrs = 2;
    o.float_prob = 0;
    const auto g = aqltest::random_array(rng, o, "a" + std::to_string(it));
    store(cat, g.array);
    const auto& e = cat.entry(g.array.schema.name);
    for (int q = 0; q < 20; ++q) {
      std::vector<Range> rs;
      for (const auto& d : g.array.schema.dims) {
        const auto a = rng.range(d.lo - 3, d.hi + 3), b = rng.range(d.lo - 3, d.hi + 3);
        rs.push_back({std::min(a, b), std::max(a, b)});
      }
      const Box range(rs);
      std::vector<AttrRange> preds;
      if (rng.coin()) {
        const auto lo = rng.range(-60, 60);
        preds.push_back({"a0", CellValue(lo), CellValue(lo + rng.range(0, 40))});
      }
      std::vector<std::int64_t> want;
      for (const auto& c : g.array.chunks) {
        bool hit = false;
        for (const auto& [k, v] : aqltest::cells_of_chunk(*c)) {
          if (!range.contains(k)) continue;
          if (!preds.empty() && (v[0] < preds[0].lo || preds[0].hi < v[0])) continue;
          hit = true;
        }
        if (hit) want.push_back(c->id);
      }
      auto got = prune(e, range, preds);
      std::sort(got.begin(), got.end());
      // Zones are conservative: every chunk holding a qualifying cell survives.
      for (auto id : want) ASSERT_TRUE(std::binary_search(got.begin(), got.end(), id));
      if (preds.empty()) {
        std::vector<std::int64_t> exhaustive;
        for (const auto& c : e.chunks) {
          bool ok = boxes_overlap(c.box, range);
          for (std::size_t d = 0; ok && d < c.dim_zone.size(); ++d)
            ok = c.dim_zone[d].overlaps(CellValue(range[d].lo), CellValue(range[d].hi));
          if (ok) exhaustive.push_back(c.id);
        }
        ASSERT_EQ(got, exhaustive);
      }
    }
  }
}

TEST(Scan, DeliversEachChunkOnceWithBoundedInflight) {
  TempDir dir;
  Catalog cat(dir.path());
  aqltest::Rng rng(28);
  aqltest::GenOptions o;
  o.sparse_prob = 0;
  o.min_dims = 2;
  auto g = aqltest::random_array(rng, o, "s");
  store(cat, g.array);
  const auto ids = cat.entry("s").chunk_ids();
  std::mutex mu;
  std::multiset<std::int64_t> seen;
  ScanOptions opt;
  opt.max_inflight = 2;
  const auto st = scan(cat, "s", ids, [&](const ChunkPtr& c, int) {
    std::lock_guard lock(mu);
    seen.insert(c->id);
  }, opt);
  EXPECT_EQ(st.delivered, ids.size());
  EXPECT_LE(st.peak_inflight, 2u);
  EXPECT_EQ(seen, std::multiset<std::int64_t>(ids.begin(), ids.end()));
}

TEST(Scan, SinkExceptionPropagates) {
  TempDir dir;
  Catalog cat(dir.path());
  aqltest::Rng rng(29);
  auto g = aqltest::random_array(rng, {}, "e");
  store(cat, g.array);
  const auto ids = cat.entry("e").chunk_ids();
  EXPECT_THROW(scan(cat, "e", ids, [](const ChunkPtr&, int) { throw std::runtime_error("boom"); }),
               std::runtime_error);
}
