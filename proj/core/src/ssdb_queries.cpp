#include <random>
#include <set>

#include "aql/algebra.hpp"
#include "aql/error.hpp"
#include "aql/ssdb.hpp"

namespace aql::ssdb {

namespace {

struct Probe {
  const Catalog& catalog;
  QueryResult& result;
  std::uint64_t chunks0, bytes0;

  Probe(const Catalog& c, QueryResult& r)
      : catalog(c), result(r), chunks0(c.io().chunks_read), bytes0(c.io().bytes_read) {}
  ~Probe() {
    result.chunks_read = catalog.io().chunks_read - chunks0;
    result.bytes_read = catalog.io().bytes_read - bytes0;
  }
};

ScanOptions scan_of(const QueryContext& ctx, std::optional<std::vector<std::string>> columns = std::nullopt) {
  ScanOptions s;
  s.n_workers = ctx.n_workers;
  s.columns = std::move(columns);
  return s;
}

GlaOptions gla_of(const QueryContext& ctx) {
  GlaOptions o;
  o.tree = AggregationTree::build(AggregationTree::Shape::balanced_binary, ctx.n_workers);
  return o;
}

Range cycle_images(const BenchConfig& cfg, std::int64_t c) {
  return {c * cfg.cycle_size, (c + 1) * cfg.cycle_size - 1};
}

Box local_slab(const QueryContext& ctx, std::int64_t img_lo, std::int64_t img_hi) {
  const auto& p = ctx.params;
  return Box{{img_lo, img_hi}, {p.x1, p.x1 + p.t1}, {p.y1, p.y1 + p.u1}};
}

/// World slab [x2 : x2+tx] x [y2 : y2+ty] in the local coordinates of an image,
/// clipped to the grid.
std::optional<Box> world_to_local(const BenchConfig& cfg, std::int64_t img, std::pair<std::int64_t, std::int64_t> origin,
                                  std::int64_t x, std::int64_t tx, std::int64_t y, std::int64_t ty) {
  const Box local{{img, img}, {x - origin.first, x + tx - origin.first}, {y - origin.second, y + ty - origin.second}};
  return box_intersect(local, Box{{img, img}, {0, cfg.grid_extent - 1}, {0, cfg.grid_extent - 1}});
}

template <typename Fn>
void for_each_valid(const Array& a, Fn&& fn) {
  for (const auto& c : a.chunks)
    for (std::size_t r = 0, n = c->rows(); r < n; ++r)
      if (c->valid(r)) fn(*c, r);
}

void add_gla(QueryResult& r, const GlaStats& s) { r.merge_bytes += s.traffic_bytes(); }

QueryResult reduce_avg_per_cycle(const QueryContext& ctx, const std::string& name, const std::string& array,
                                 const std::string& attr, bool world) {
  QueryResult r;
  r.name = name;
  r.table.key_names = {"cycle"};
  r.table.columns = {{"avg_" + attr, AttrKind::float64}};
  std::uint64_t expected = 0;
  {
    Probe probe(ctx.catalog, r);
    for (std::int64_t c = 0; c < ctx.cfg.n_cycles(); ++c) {
      const Range imgs = cycle_images(ctx.cfg, c);
      const auto& p = ctx.params;
      const Box range = world ? Box{imgs, {p.x2, p.x2 + p.t2}, {p.y2, p.y2 + p.u2}} : local_slab(ctx, imgs.lo, imgs.hi);
      expected += intersecting_chunks(ctx.catalog, array, range);
      const Array a = rebox(ctx.catalog, array, range, scan_of(ctx, std::vector<std::string>{attr}));
      GlaStats gs;
      const Table t = reduce(a, {}, {AggSpec{AggKind::avg, attr, "", nullptr}}, gla_of(ctx), &gs);
      add_gla(r, gs);
      for (const auto& row : t.rows) r.table.rows.push_back({Coord{c}, row.values});
    }
  }
  r.expected_chunks = expected;
  return r;
}

struct Tile {
  std::int64_t cycle, group, img, cx, cy;
};

/// Raw D6-tiles around per-image group centers, in world coordinates.
void emit_tiles(const QueryContext& ctx, const std::vector<Tile>& tiles, QueryResult& r) {
  const auto origins = read_origins(ctx.catalog);
  const auto& entry = ctx.catalog.entry(kImages);
  const std::int64_t d6 = ctx.params.d6;
  std::map<std::int64_t, std::vector<std::pair<const Tile*, Box>>> per_image;
  for (const auto& t : tiles) {
    const auto origin = origins[static_cast<std::size_t>(t.img)];
    auto local = world_to_local(ctx.cfg, t.img, origin, t.cx - d6, 2 * d6, t.cy - d6, 2 * d6);
    if (local) per_image[t.img].emplace_back(&t, *local);
  }
  for (const auto& [img, list] : per_image) {
    // Each needed chunk is read once per image.
    std::set<std::int64_t> ids;
    for (const auto& [t, box] : list)
      for (auto id : prune(entry, box)) ids.insert(id);
    const std::vector<std::int64_t> id_list(ids.begin(), ids.end());
    Array chunks;
    chunks.schema = entry.schema;
    chunks.n_workers = ctx.n_workers;
    std::mutex mu;
    scan(ctx.catalog, kImages, id_list, [&](const ChunkPtr& c, int w) {
      std::lock_guard lock(mu);
      chunks.chunks.push_back(c);
      chunks.placement.push_back(w);
    }, scan_of(ctx));
    const auto origin = origins[static_cast<std::size_t>(img)];
    const std::vector<std::int64_t> offset{0, origin.first, origin.second};
    for (const auto& [t, box] : list) {
      const Array tile = shift(rebox(chunks, box), offset);
      for_each_valid(tile, [&](const Chunk& c, std::size_t row) {
        TableRow out{Coord{t->cycle, t->group, img, c.coord(row, 1), c.coord(row, 2)}, {}};
        for (std::size_t k = 0; k < c.attrs.size(); ++k) out.values.push_back(c.value(k, row));
        r.table.rows.push_back(std::move(out));
      });
    }
  }
}

QueryResult trajectory_query(const QueryContext& ctx, const std::string& name, bool polygons) {
  QueryResult r;
  r.name = name;
  r.table.key_names = {"cycle", "group_id", "img_id", "x", "y"};
  for (int k = 1; k <= kAttrs; ++k) r.table.columns.push_back({attr_name(k), AttrKind::int64});
  Probe probe(ctx.catalog, r);
  const auto& p = ctx.params;
  std::vector<Tile> tiles;
  std::vector<std::pair<std::int64_t, std::int64_t>> origins;
  if (polygons) origins = read_origins(ctx.catalog);
  for (std::int64_t c = 0; c < ctx.cfg.n_cycles(); ++c) {
    std::set<std::int64_t> hit;
    if (!polygons) {
      const Box range{{c, c}, {0, ctx.cfg.cycle_size - 1}, {p.x2, p.x2 + p.t3}, {p.y2, p.y2 + p.u3}};
      const Array a = rebox(ctx.catalog, kGroupCenterImg, range, scan_of(ctx, std::vector<std::string>{"group_id"}));
      for_each_valid(a, [&](const Chunk& ch, std::size_t row) { hit.insert(ch.value(0, row).as_int()); });
    } else {
      const Range imgs = cycle_images(ctx.cfg, c);
      for (std::int64_t img = imgs.lo; img <= imgs.hi; ++img) {
        const auto local =
            world_to_local(ctx.cfg, img, origins[static_cast<std::size_t>(img)], p.x2, p.t3, p.y2, p.u3);
        if (!local) continue;
        const Array a = rebox(ctx.catalog, kObs, *local, scan_of(ctx, std::vector<std::string>{"group_id"}));
        for_each_valid(a, [&](const Chunk& ch, std::size_t row) {
          const auto g = ch.value(0, row).as_int();
          if (g >= 0) hit.insert(g);
        });
      }
    }
    if (hit.empty()) continue;
    const Box all{{c, c}, {0, ctx.cfg.cycle_size - 1}, {0, ctx.cfg.domain_extent - 1}, {0, ctx.cfg.domain_extent - 1}};
    const Array centers = rebox(ctx.catalog, kGroupCenterImg, all, scan_of(ctx, std::vector<std::string>{"group_id"}));
    for_each_valid(centers, [&](const Chunk& ch, std::size_t row) {
      const auto g = ch.value(0, row).as_int();
      if (hit.count(g))
        tiles.push_back({c, g, c * ctx.cfg.cycle_size + ch.coord(row, 1), ch.coord(row, 2), ch.coord(row, 3)});
    });
  }
  emit_tiles(ctx, tiles, r);
  return r;
}

}  // namespace

QueryResult q1(const QueryContext& ctx) {
  return reduce_avg_per_cycle(ctx, "Q1", kImages, attr_name(ctx.params.vi), false);
}

QueryResult q2(const QueryContext& ctx) {
  QueryResult r;
  r.name = "Q2";
  r.table.key_names = {"cycle", "obs_id"};
  r.table.columns = {{"n_cells", AttrKind::int64}, {"center_x", AttrKind::float64}, {"center_y", AttrKind::float64}};
  Probe probe(ctx.catalog, r);
  const auto origins = read_origins(ctx.catalog);
  for (std::int64_t c = 0; c < ctx.cfg.n_cycles(); ++c) {
    const std::int64_t img = c * ctx.cfg.cycle_size;
    const Array a = rebox(ctx.catalog, kImages, local_slab(ctx, img, img), scan_of(ctx));
    if (a.chunks.empty()) continue;
    CookStats cs;
    const auto obs = cook_image(a, ctx.cfg, img, origins[static_cast<std::size_t>(img)], ctx.params.recook_threshold, &cs);
    r.merge_bytes += cs.merge_bytes;
    for (const auto& o : obs)
      r.table.rows.push_back({Coord{c, o.obs_id},
                              {CellValue(static_cast<std::int64_t>(o.cells.size())), CellValue(o.center_x),
                               CellValue(o.center_y)}});
  }
  return r;
}

QueryResult q3(const QueryContext& ctx) {
  QueryResult r;
  r.name = "Q3";
  r.table.key_names = {"cycle", "img", "x", "y"};
  for (int k = 1; k <= kAttrs; ++k) r.table.columns.push_back({attr_name(k), AttrKind::float64});
  Probe probe(ctx.catalog, r);
  for (std::int64_t c = 0; c < ctx.cfg.n_cycles(); ++c) {
    const Range imgs = cycle_images(ctx.cfg, c);
    const Array a = rebox(ctx.catalog, kImages, local_slab(ctx, imgs.lo, imgs.hi), scan_of(ctx));
    if (a.chunks.empty()) continue;
    ApplyPlusSpec spec;
    spec.shape.offsets = {{0, 0},
                          {0, std::min<std::int64_t>(3, a.schema.dims[1].extent() - 1)},
                          {0, std::min<std::int64_t>(3, a.schema.dims[2].extent() - 1)}};
    spec.patterns = {"1", "1001001000", "1001001000"};
    spec.clip_to_next_origin = true;
    for (int k = 1; k <= kAttrs; ++k) spec.aggs.push_back({AggKind::avg, attr_name(k), attr_name(k), nullptr});
    ApplyPlusStats st;
    const Array out = apply_plus(a, spec, gla_of(ctx), &st);
    add_gla(r, st.gla);
    for_each_valid(out, [&](const Chunk& ch, std::size_t row) {
      const Coord p = ch.coords(row);
      TableRow tr{Coord{c, p[0], p[1], p[2]}, {}};
      for (std::size_t k = 0; k < ch.attrs.size(); ++k) tr.values.push_back(ch.value(k, row));
      r.table.rows.push_back(std::move(tr));
    });
  }
  return r;
}

QueryResult q4(const QueryContext& ctx) {
  return reduce_avg_per_cycle(ctx, "Q4", kObsCenter, obs_attr_name(ctx.params.oi), true);
}

QueryResult q5(const QueryContext& ctx) {
  QueryResult r;
  r.name = "Q5";
  r.table.key_names = {"cycle", "obs_id"};
  r.table.columns = {{"count_distinct_obs_id", AttrKind::int64}};
  std::uint64_t expected = 0;
  {
    Probe probe(ctx.catalog, r);
    const auto origins = read_origins(ctx.catalog);
    expected += ctx.catalog.entry(kImageOrigin).chunks.size();
    const auto& p = ctx.params;
    for (std::int64_t c = 0; c < ctx.cfg.n_cycles(); ++c) {
      Array joined;
      joined.schema = obs_schema(ctx.cfg);
      joined.schema.dims[1] = {"x", 0, ctx.cfg.domain_extent - 1};
      joined.schema.dims[2] = {"y", 0, ctx.cfg.domain_extent - 1};
      joined.n_workers = ctx.n_workers;
      joined.schema.attrs = {{"obs_id", AttrKind::int64}};
      const Range imgs = cycle_images(ctx.cfg, c);
      for (std::int64_t img = imgs.lo; img <= imgs.hi; ++img) {
        const auto origin = origins[static_cast<std::size_t>(img)];
        const auto local = world_to_local(ctx.cfg, img, origin, p.x2, p.t2, p.y2, p.u2);
        if (!local) continue;
        expected += intersecting_chunks(ctx.catalog, kObs, *local);
        const Array a = rebox(ctx.catalog, kObs, *local, scan_of(ctx, std::vector<std::string>{"obs_id"}));
        const std::vector<std::int64_t> offset{0, origin.first, origin.second};
        const Array moved = shift(a, offset);
        joined.chunks.insert(joined.chunks.end(), moved.chunks.begin(), moved.chunks.end());
        joined.placement.insert(joined.placement.end(), moved.placement.begin(), moved.placement.end());
      }
      GlaStats gs;
      const Table t = reduce(joined, {}, {AggSpec{AggKind::count_distinct, "obs_id", "", nullptr}}, gla_of(ctx), &gs);
      add_gla(r, gs);
      if (t.rows.empty()) continue;
      std::set<std::int64_t> ids;
      for_each_valid(joined, [&](const Chunk& ch, std::size_t row) { ids.insert(ch.value(0, row).as_int()); });
      for (auto id : ids) r.table.rows.push_back({Coord{c, id}, {t.rows[0].values[0]}});
    }
  }
  r.expected_chunks = expected;
  return r;
}

QueryResult q6(const QueryContext& ctx) {
  QueryResult r;
  r.name = "Q6";
  r.table.key_names = {"cycle", "img_id", "cx", "cy"};
  r.table.columns = {{"density", AttrKind::int64}};
  Probe probe(ctx.catalog, r);
  const auto& p = ctx.params;
  for (std::int64_t c = 0; c < ctx.cfg.n_cycles(); ++c) {
    const Box range{cycle_images(ctx.cfg, c), {p.x2, p.x2 + p.t2}, {p.y2, p.y2 + p.u2}};
    const Array a = rebox(ctx.catalog, kObsCenter, range, scan_of(ctx, std::vector<std::string>{"obs_id"}));
    if (a.chunks.empty()) continue;
    ApplyPlusSpec spec;
    // Cells past the slab hold nothing, so the tile may be cut at its edge.
    spec.shape.offsets = {{0, 0},
                          {0, std::min(p.d4, a.schema.dims[1].extent()) - 1},
                          {0, std::min(p.d4, a.schema.dims[2].extent()) - 1}};
    spec.aggs = {AggSpec{AggKind::count, "", "density", nullptr}};
    ApplyPlusStats st;
    const Array density = apply_plus(a, spec, gla_of(ctx), &st);
    add_gla(r, st.gla);
    Predicate keep;
    keep.ranges.push_back({"density", CellValue(p.d5), CellValue(std::numeric_limits<std::int64_t>::max())});
    const Array dense_tiles = filter(density, keep);
    for_each_valid(dense_tiles, [&](const Chunk& ch, std::size_t row) {
      const Coord q = ch.coords(row);
      r.table.rows.push_back({Coord{c, q[0], q[1], q[2]}, {ch.value(0, row)}});
    });
  }
  return r;
}

QueryResult q7(const QueryContext& ctx) {
  QueryResult r;
  r.name = "Q7";
  r.table.key_names = {"cycle", "group_id"};
  r.table.columns = {{"center_x", AttrKind::float64}, {"center_y", AttrKind::float64}};
  std::uint64_t expected = 0;
  {
    Probe probe(ctx.catalog, r);
    const auto& p = ctx.params;
    for (std::int64_t c = 0; c < ctx.cfg.n_cycles(); ++c) {
      const Box range{{c, c}, {p.x2, p.x2 + p.t2}, {p.y2, p.y2 + p.u2}};
      expected += intersecting_chunks(ctx.catalog, kGroupCenter, range);
      const Array a = rebox(ctx.catalog, kGroupCenter, range,
                            scan_of(ctx, std::vector<std::string>{"group_id", "center_x", "center_y"}));
      for_each_valid(a, [&](const Chunk& ch, std::size_t row) {
        const auto gid = *ch.attr_index("group_id"), x = *ch.attr_index("center_x"), y = *ch.attr_index("center_y");
        r.table.rows.push_back({Coord{c, ch.value(gid, row).as_int()}, {ch.value(x, row), ch.value(y, row)}});
      });
    }
  }
  r.expected_chunks = expected;
  return r;
}

QueryResult q8(const QueryContext& ctx) { return trajectory_query(ctx, "Q8", false); }
QueryResult q9(const QueryContext& ctx) { return trajectory_query(ctx, "Q9", true); }

QueryResult run_query(int q, const QueryContext& ctx) {
  switch (q) {
    case 1: return q1(ctx);
    case 2: return q2(ctx);
    case 3: return q3(ctx);
    case 4: return q4(ctx);
    case 5: return q5(ctx);
    case 6: return q6(ctx);
    case 7: return q7(ctx);
    case 8: return q8(ctx);
    case 9: return q9(ctx);
    default: fail(Errc::config, "unknown query Q" + std::to_string(q));
  }
}

QueryParams random_params(const BenchConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto pick = [&](std::int64_t lo, std::int64_t hi) {
    return hi <= lo ? lo : lo + static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
  };
  QueryParams p = cfg.query;
  p.x1 = pick(0, cfg.grid_extent - 1 - p.t1);
  p.y1 = pick(0, cfg.grid_extent - 1 - p.u1);
  // World slabs start around a random point of a random image footprint.
  const auto img = pick(0, cfg.n_images - 1);
  const auto [ox, oy] = image_origin(cfg, img);
  const auto px = ox + pick(0, cfg.grid_extent - 1), py = oy + pick(0, cfg.grid_extent - 1);
  p.x2 = std::clamp<std::int64_t>(px - p.t2 / 2, 0, std::max<std::int64_t>(0, cfg.domain_extent - 1 - p.t2));
  p.y2 = std::clamp<std::int64_t>(py - p.u2 / 2, 0, std::max<std::int64_t>(0, cfg.domain_extent - 1 - p.u2));
  p.vi = static_cast<int>(pick(1, kAttrs));
  p.oi = static_cast<int>(pick(1, kAttrs));
  return p;
}

}  // namespace aql::ssdb
