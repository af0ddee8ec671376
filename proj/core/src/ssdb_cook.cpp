#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <unordered_set>

#include "aql/algebra.hpp"
#include "aql/error.hpp"
#include "aql/ssdb.hpp"

namespace aql::ssdb {

std::int64_t cell_id(const BenchConfig& cfg, std::int64_t img, std::int64_t x, std::int64_t y) {
  return img * cfg.cells_per_image() + x * cfg.grid_extent + y;
}

namespace {

GlaOptions options_for(const Array& a, std::int64_t img) {
  GlaOptions opt;
  const int n = std::max(1, a.n_workers);
  opt.tree = AggregationTree::build(AggregationTree::Shape::balanced_binary, n, static_cast<int>(img % n));
  return opt;
}

Chunk with_ids(const Chunk& c, const BenchConfig& cfg) {
  const std::size_t n = c.rows();
  std::vector<std::int64_t> ids(n, 0);
  const std::vector<AttributeSpec> attrs{{"id", AttrKind::int64}};
  if (c.dense()) {
    c.validity.for_each_set([&](std::size_t r) {
      const Coord p = c.coords(r);
      ids[r] = cell_id(cfg, p[0], p[1], p[2]);
    });
    return make_dense_chunk(c.id, c.box, attrs, {std::make_shared<const Column>(std::move(ids))}, c.validity);
  }
  std::vector<std::vector<std::int64_t>> coords(3, std::vector<std::int64_t>(n));
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t d = 0; d < 3; ++d) coords[d][r] = c.coord(r, d);
    ids[r] = cell_id(cfg, coords[0][r], coords[1][r], coords[2][r]);
  }
  return make_sparse_chunk(c.id, c.box, attrs, coords, {std::make_shared<const Column>(std::move(ids))});
}

// Per-label accumulation of member cells and raw attribute sums.
struct ObsAcc {
  std::int64_t img = 0;
  std::int64_t n = 0;
  std::array<std::int64_t, kAttrs> sums{};
  std::vector<std::pair<std::int64_t, std::int64_t>> cells;

  void merge(ObsAcc&& o) {
    n += o.n;
    for (int k = 0; k < kAttrs; ++k) sums[static_cast<std::size_t>(k)] += o.sums[static_cast<std::size_t>(k)];
    cells.insert(cells.end(), o.cells.begin(), o.cells.end());
  }
};

/// Collects observation properties from the join of labels and raw values.
class ObservationGla {
 public:
  static constexpr bool kChunkAtATime = true;

  void accumulate_chunk(const Chunk& c) {
    const auto id_col = c.attr_index("id");
    if (!id_col) fail(Errc::schema, "observation input lacks 'id'");
    std::array<const std::vector<std::int64_t>*, kAttrs> vcols{};
    for (int k = 0; k < kAttrs; ++k) {
      if (auto i = c.attr_index(attr_name(k + 1)))
        vcols[static_cast<std::size_t>(k)] = std::get_if<std::vector<std::int64_t>>(c.columns[*i].get());
    }
    const auto& ids = std::get<std::vector<std::int64_t>>(*c.columns[*id_col]);
    auto take = [&](std::size_t r) {
      ObsAcc& a = acc_[ids[r]];
      a.img = c.coord(r, 0);
      ++a.n;
      for (std::size_t k = 0; k < kAttrs; ++k)
        if (vcols[k]) a.sums[k] += (*vcols[k])[r];
      a.cells.emplace_back(c.coord(r, 1), c.coord(r, 2));
    };
    if (c.dense())
      c.validity.for_each_set(take);
    else
      for (std::size_t r = 0, n = c.rows(); r < n; ++r) take(r);
  }

  void local_merge(ObservationGla&& o) {
    for (auto& [label, a] : o.acc_) {
      auto it = acc_.find(label);
      if (it == acc_.end())
        acc_.emplace(label, std::move(a));
      else
        it->second.merge(std::move(a));
    }
  }

  void serialize(ByteWriter& out) const {
    out.put<std::uint64_t>(acc_.size());
    for (const auto& [label, a] : acc_) {
      out.put<std::int64_t>(label);
      out.put<std::int64_t>(a.img);
      out.put<std::int64_t>(a.n);
      for (auto s : a.sums) out.put<std::int64_t>(s);
      out.put<std::uint64_t>(a.cells.size());
      for (auto [x, y] : a.cells) {
        out.put<std::int64_t>(x);
        out.put<std::int64_t>(y);
      }
    }
  }

  void remote_merge(ByteReader& in) {
    ObservationGla other;
    const auto n = in.get<std::uint64_t>();
    for (std::uint64_t i = 0; i < n; ++i) {
      const auto label = in.get<std::int64_t>();
      ObsAcc a;
      a.img = in.get<std::int64_t>();
      a.n = in.get<std::int64_t>();
      for (auto& s : a.sums) s = in.get<std::int64_t>();
      const auto cells = in.get<std::uint64_t>();
      a.cells.reserve(cells);
      for (std::uint64_t k = 0; k < cells; ++k) {
        const auto x = in.get<std::int64_t>();
        const auto y = in.get<std::int64_t>();
        a.cells.emplace_back(x, y);
      }
      other.acc_.emplace(label, std::move(a));
    }
    local_merge(std::move(other));
  }

  std::map<std::int64_t, ObsAcc> terminate() { return std::move(acc_); }

 private:
  std::map<std::int64_t, ObsAcc> acc_;
};

bool same_chunk_cells(const Chunk& a, const Chunk& b) {
  if (a.box != b.box || a.layout != b.layout || a.attrs.size() != b.attrs.size()) return false;
  if (a.dense()) {
    if (a.validity != b.validity) return false;
    bool same = true;
    for (std::size_t k = 0; k < a.attrs.size() && same; ++k) {
      const Column& ca = *a.columns[k];
      const Column& cb = *b.columns[k];
      a.validity.for_each_set([&](std::size_t r) {
        if (same && column_get(ca, r) != column_get(cb, r)) same = false;
      });
    }
    return same;
  }
  if (a.rows() != b.rows()) return false;
  for (std::size_t r = 0; r < a.rows(); ++r) {
    if (a.coords(r) != b.coords(r)) return false;
    for (std::size_t k = 0; k < a.attrs.size(); ++k)
      if (a.value(k, r) != b.value(k, r)) return false;
  }
  return true;
}

}  // namespace

Array min_id_round(const Array& labels, const GlaOptions& options, Boundary boundary) {
  const std::size_t nd = labels.schema.dims.size();
  NeighborhoodShape shape;
  for (std::size_t d = 0; d < nd; ++d) shape.offsets.push_back(d + 2 < nd ? Range{0, 0} : Range{-1, 1});
  ApplyPlusSpec spec;
  spec.shape = shape;
  spec.aggs = {AggSpec{AggKind::min, "id", "id", nullptr}};
  spec.boundary = boundary;
  return apply_plus(labels, spec, options);
}

bool same_cells(const Array& a, const Array& b) {
  if (a.chunks.size() == b.chunks.size()) {
    bool aligned = true;
    for (std::size_t i = 0; i < a.chunks.size() && aligned; ++i) aligned = a.chunks[i]->box == b.chunks[i]->box;
    if (aligned) {
      for (std::size_t i = 0; i < a.chunks.size(); ++i)
        if (!same_chunk_cells(*a.chunks[i], *b.chunks[i])) return false;
      return true;
    }
  }
  // Different chunking: compare cell maps.
  auto cells = [](const Array& x) {
    std::map<std::vector<std::int64_t>, std::vector<CellValue>> m;
    for (const auto& c : x.chunks) {
      for (std::size_t r = 0; r < c->rows(); ++r) {
        if (!c->valid(r)) continue;
        const Coord p = c->coords(r);
        std::vector<CellValue> v;
        for (std::size_t k = 0; k < c->attrs.size(); ++k) v.push_back(c->value(k, r));
        m[{p.values().begin(), p.values().end()}] = std::move(v);
      }
    }
    return m;
  };
  return cells(a) == cells(b);
}

Array label_cells(const Array& image, const BenchConfig& cfg, std::int64_t threshold, CookStats* stats,
                  Boundary boundary) {
  if (image.schema.dims.size() != 3) fail(Errc::schema, "cooking expects (img_id, x, y) arrays");
  Predicate p;
  p.ranges.push_back({"v1", CellValue(threshold), CellValue(std::numeric_limits<std::int64_t>::max())});
  const Array filtered = filter(image, p);
  Array cur = transform_chunks(filtered, [&](const Chunk& c, int) { return std::optional<Chunk>(with_ids(c, cfg)); });
  cur.schema.attrs = {{"id", AttrKind::int64}};

  const std::int64_t img = image.schema.dims[0].lo;
  const GlaOptions opt = options_for(image, img);
  const std::uint64_t guard = std::max<std::uint64_t>(cur.valid_cells(), 1) + 1;
  std::int64_t iterations = 0;
  std::uint64_t traffic = 0;
  while (true) {
    ApplyPlusStats st;
    NeighborhoodShape shape{{Range{0, 0}, Range{-1, 1}, Range{-1, 1}}};
    ApplyPlusSpec spec;
    spec.shape = shape;
    spec.aggs = {AggSpec{AggKind::min, "id", "id", nullptr}};
    spec.boundary = boundary;
    Array next = apply_plus(cur, spec, opt, &st);
    traffic += st.gla.traffic_bytes();
    ++iterations;
    const bool done = same_cells(next, cur);
    cur = std::move(next);
    if (done) break;
    if (static_cast<std::uint64_t>(iterations) > guard)
      fail(Errc::internal, "min-id labeling did not converge after " + std::to_string(iterations) + " rounds");
  }
  if (stats) {
    stats->iterations += iterations;
    stats->merge_bytes += traffic;
  }
  return cur;
}

std::vector<std::pair<std::int64_t, std::int64_t>> trace_polygon(
    const std::vector<std::pair<std::int64_t, std::int64_t>>& cells) {
  if (cells.empty()) return {};
  struct PairHash {
    std::size_t operator()(const std::pair<std::int64_t, std::int64_t>& p) const {
      return std::hash<std::int64_t>()(p.first * 0x9E3779B97F4A7C15LL ^ p.second);
    }
  };
  const std::unordered_set<std::pair<std::int64_t, std::int64_t>, PairHash> set(cells.begin(), cells.end());
  auto member = [&](std::int64_t i, std::int64_t j) { return set.count({i, j}) != 0; };
  // Headings clockwise from east; the cell set lies to the right of each edge.
  static constexpr std::int64_t di[4] = {0, 1, 0, -1};
  static constexpr std::int64_t dj[4] = {1, 0, -1, 0};
  auto boundary = [&](std::int64_t i, std::int64_t j, int h) {
    switch (h) {
      case 0: return member(i, j) && !member(i - 1, j);
      case 1: return member(i, j - 1) && !member(i, j);
      case 2: return member(i - 1, j - 1) && !member(i, j - 1);
      default: return member(i - 1, j) && !member(i - 1, j - 1);
    }
  };
  const auto start = *std::min_element(cells.begin(), cells.end());
  std::vector<std::pair<std::int64_t, std::int64_t>> verts{start};
  std::int64_t i = start.first, j = start.second;
  int h = 0;
  const std::size_t limit = 4 * cells.size() + 4;
  for (std::size_t step = 0;; ++step) {
    if (step > limit) fail(Errc::internal, "boundary trace did not close");
    i += di[h];
    j += dj[h];
    int next = -1;
    // Left turn first so diagonal neighbours stay on one outline.
    for (int cand : {(h + 3) % 4, h, (h + 1) % 4}) {
      if (boundary(i, j, cand)) {
        next = cand;
        break;
      }
    }
    if (next < 0) fail(Errc::internal, "boundary trace lost its edge");
    if (i == start.first && j == start.second && next == 0) break;
    if (next != h) verts.emplace_back(i, j);
    h = next;
  }
  return verts;
}

std::vector<Observation> cook_image(const Array& image, const BenchConfig& cfg, std::int64_t img,
                                    std::pair<std::int64_t, std::int64_t> origin, std::int64_t threshold,
                                    CookStats* stats) {
  CookStats local;
  const Array labels = label_cells(image, cfg, threshold, &local);
  const Array joined = inner_djoin(labels, image);
  auto run = run_gla<ObservationGla>(joined, [] { return ObservationGla{}; }, options_for(image, img));
  local.merge_bytes += run.stats.traffic_bytes();

  std::vector<Observation> out;
  for (auto& [label, acc] : run.result) {
    ++local.labels;
    Observation o;
    o.obs_id = label;
    o.img_id = acc.img;
    o.cells = std::move(acc.cells);
    std::sort(o.cells.begin(), o.cells.end());
    std::int64_t x0 = o.cells.front().first, x1 = x0, y0 = o.cells.front().second, y1 = y0;
    double sx = 0, sy = 0;
    for (auto [x, y] : o.cells) {
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
      sx += static_cast<double>(x);
      sy += static_cast<double>(y);
    }
    o.bbox = Box{{x0, x1}, {y0, y1}};
    if (x1 - x0 + 1 > cfg.obs_max_bbox || y1 - y0 + 1 > cfg.obs_max_bbox) {
      ++local.dropped;
      continue;
    }
    o.polygon = trace_polygon(o.cells);
    if (static_cast<std::int64_t>(o.polygon.size()) > cfg.obs_max_poly_edges) {
      ++local.dropped;
      continue;
    }
    const double n = static_cast<double>(o.cells.size());
    o.center_x = static_cast<double>(origin.first) + sx / n;
    o.center_y = static_cast<double>(origin.second) + sy / n;
    for (std::size_t k = 0; k < kAttrs; ++k) o.attrs[k] = static_cast<double>(acc.sums[k]) / static_cast<double>(acc.n);
    out.push_back(std::move(o));
  }
  if (stats) {
    stats->iterations += local.iterations;
    stats->labels += local.labels;
    stats->dropped += local.dropped;
    stats->merge_bytes += local.merge_bytes;
  }
  return out;
}

namespace {

Box tight_box(const std::vector<std::vector<std::int64_t>>& coords) {
  std::vector<Range> r;
  for (const auto& c : coords) {
    const auto [lo, hi] = std::minmax_element(c.begin(), c.end());
    r.push_back({*lo, *hi});
  }
  return Box(std::span<const Range>(r));
}

}  // namespace

CookStats cook(Catalog& catalog, const BenchConfig& cfg) {
  cfg.validate();
  if (!catalog.has(kImages) || !catalog.has(kImageOrigin)) fail(Errc::dependency, "cooking needs phase 'load'");
  const auto origins = read_origins(catalog);
  catalog.create_array(obs_schema(cfg), cfg.n_workers);
  catalog.create_array(obs_center_schema(cfg), cfg.n_workers);
  const auto center_schema = obs_center_schema(cfg);
  const auto cell_schema = obs_schema(cfg);
  CookStats stats;
  ScanOptions scan;
  scan.n_workers = cfg.n_workers;
  for (std::int64_t img = 0; img < cfg.n_images; ++img) {
    const Box box{{img, img}, {0, cfg.grid_extent - 1}, {0, cfg.grid_extent - 1}};
    const Array image = load_array(catalog, kImages, box, {}, scan);
    const auto obs = cook_image(image, cfg, img, origins[static_cast<std::size_t>(img)], cfg.cook_threshold, &stats);
    if (obs.empty()) continue;
    const int worker = static_cast<int>(img % cfg.n_workers);

    // Member cells, row-major.
    std::vector<std::tuple<std::int64_t, std::int64_t, std::int64_t>> cells;
    for (const auto& o : obs)
      for (auto [x, y] : o.cells) cells.emplace_back(x, y, o.obs_id);
    std::sort(cells.begin(), cells.end());
    std::vector<std::vector<std::int64_t>> coords(3);
    std::vector<std::int64_t> ids, groups;
    for (auto [x, y, id] : cells) {
      coords[0].push_back(img);
      coords[1].push_back(x);
      coords[2].push_back(y);
      ids.push_back(id);
      groups.push_back(-1);
    }
    catalog.put_chunk(kObs,
                      make_sparse_chunk(img, tight_box(coords), cell_schema.attrs, coords,
                                        {std::make_shared<const Column>(std::move(ids)),
                                         std::make_shared<const Column>(std::move(groups))}),
                      worker);

    std::vector<std::vector<std::int64_t>> centers(3);
    std::vector<Column> cols;
    for (const auto& a : center_schema.attrs) cols.push_back(make_column(a.kind, 0));
    for (const auto& o : obs) {
      centers[0].push_back(img);
      centers[1].push_back(std::llround(o.center_x));
      centers[2].push_back(std::llround(o.center_y));
      std::get<0>(cols[0]).push_back(o.obs_id);
      std::get<0>(cols[1]).push_back(static_cast<std::int64_t>(o.cells.size()));
      std::get<0>(cols[2]).push_back(static_cast<std::int64_t>(o.polygon.size()));
      std::get<1>(cols[3]).push_back(o.center_x);
      std::get<1>(cols[4]).push_back(o.center_y);
      for (std::size_t k = 0; k < kAttrs; ++k) std::get<1>(cols[5 + k]).push_back(o.attrs[k]);
    }
    std::vector<ColumnPtr> ptrs;
    for (auto& c : cols) ptrs.push_back(std::make_shared<const Column>(std::move(c)));
    catalog.put_chunk(kObsCenter, make_sparse_chunk(img, tight_box(centers), center_schema.attrs, centers, std::move(ptrs)),
                      worker);
  }
  catalog.commit(kObs);
  catalog.commit(kObsCenter);
  return stats;
}

}  // namespace aql::ssdb
