#pragma once

// Seeded generators and brute-force oracles shared by unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "aql/algebra.hpp"
#include "aql/apply_plus.hpp"
#include "aql/array_model.hpp"
#include "aql/ssdb.hpp"
#include "aql/storage.hpp"

namespace aqltest {

using aql::Array;
using aql::AttrKind;
using aql::Box;
using aql::CellValue;
using aql::Coord;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : g_(seed) {}
  std::int64_t range(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(g_);
  }
  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(g_); }
  bool coin(double p = 0.5) { return real(0, 1) < p; }
  template <typename T>
  const T& pick(const std::vector<T>& v) {
    return v[static_cast<std::size_t>(range(0, static_cast<std::int64_t>(v.size()) - 1))];
  }
  std::uint64_t next() { return g_(); }
  std::mt19937_64& engine() { return g_; }

 private:
  std::mt19937_64 g_;
};

struct GenOptions {
  std::size_t min_dims = 1;
  std::size_t max_dims = 3;
  std::uint64_t max_cells = 64 * 64;
  std::int64_t max_extent = 64;
  std::size_t min_attrs = 1;
  std::size_t max_attrs = 3;
  double float_prob = 0.4;
  double sparse_prob = 0.3;
  int max_workers = 8;
  std::int64_t value_span = 50;
  bool allow_negative_lo = true;
};

inline CellValue random_value(Rng& rng, AttrKind kind, std::int64_t span) {
  if (kind == AttrKind::int64) return CellValue(rng.range(-span, span));
  // Quarter-steps keep float sums exact enough to compare without drama.
  return CellValue(static_cast<double>(rng.range(-4 * span, 4 * span)) / 4.0);
}

inline aql::ArraySchema random_schema(Rng& rng, const GenOptions& o, const std::string& name = "r") {
  aql::ArraySchema s;
  s.name = name;
  const auto nd = static_cast<std::size_t>(rng.range(static_cast<std::int64_t>(o.min_dims), static_cast<std::int64_t>(o.max_dims)));
  std::uint64_t budget = o.max_cells;
  for (std::size_t d = 0; d < nd; ++d) {
    const std::size_t left = nd - d - 1;
    const auto cap = std::max<std::int64_t>(
        1, std::min<std::int64_t>(o.max_extent, static_cast<std::int64_t>(budget / (left ? (1ull << left) : 1))));
    const auto ext = rng.range(1, cap);
    budget = std::max<std::uint64_t>(1, budget / static_cast<std::uint64_t>(ext));
    const auto lo = o.allow_negative_lo ? rng.range(-5, 5) : rng.range(0, 5);
    s.dims.push_back({"d" + std::to_string(d), lo, lo + ext - 1});
  }
  const auto na = rng.range(static_cast<std::int64_t>(o.min_attrs), static_cast<std::int64_t>(o.max_attrs));
  for (std::int64_t a = 0; a < na; ++a)
    s.attrs.push_back({"a" + std::to_string(a), rng.coin(o.float_prob) ? AttrKind::float64 : AttrKind::int64});
  return s;
}

inline aql::Chunk random_whole(Rng& rng, const aql::ArraySchema& s, double valid_prob, std::int64_t span) {
  const Box box = s.box();
  const auto n = static_cast<std::size_t>(box.volume());
  std::vector<aql::Column> cols;
  for (const auto& a : s.attrs) {
    auto col = aql::make_column(a.kind, n);
    std::visit(
        [&](auto& v) {
          using T = typename std::remove_reference_t<decltype(v)>::value_type;
          for (auto& x : v) {
            const auto c = random_value(rng, a.kind, span);
            x = std::is_same_v<T, double> ? static_cast<T>(c.as_double()) : static_cast<T>(c.as_int());
          }
        },
        col);
    cols.push_back(std::move(col));
  }
  aql::Bitmap valid(n);
  for (std::size_t i = 0; i < n; ++i) valid.set(i, rng.coin(valid_prob));
  return aql::make_dense_chunk(s, 0, box, std::move(cols), std::move(valid));
}

inline std::vector<std::int64_t> random_chunk_shape(Rng& rng, const aql::ArraySchema& s) {
  std::vector<std::int64_t> shape;
  for (const auto& d : s.dims) shape.push_back(rng.range(1, std::max<std::int64_t>(1, d.extent())));
  return shape;
}

/// Array assembled from `whole` cut along `shape`; sparse chunks when `sparse`.
inline Array assemble(const aql::ArraySchema& s, const aql::Chunk& whole, const std::vector<std::int64_t>& shape,
                      bool sparse, int n_workers) {
  Array a;
  a.schema = s;
  a.schema.density = sparse ? aql::Density::sparse : aql::Density::dense;
  a.n_workers = n_workers;
  const auto strategy = aql::ChunkingStrategy::regular(shape);
  std::vector<aql::Chunk> chunks =
      sparse ? aql::chunk_array(a.schema, aql::to_sparse(whole), strategy) : aql::chunk_array(s, whole, strategy);
  std::vector<std::int64_t> ids;
  for (auto& c : chunks) {
    aql::compute_zones(c);
    ids.push_back(c.id);
    a.chunks.push_back(std::make_shared<const aql::Chunk>(std::move(c)));
  }
  a.placement = aql::place_chunks(ids, n_workers);
  return a;
}

struct Generated {
  Array array;
  aql::Chunk whole;
  std::vector<std::int64_t> shape;
};

inline Generated random_array(Rng& rng, const GenOptions& o = {}, const std::string& name = "r") {
  const auto s = random_schema(rng, o, name);
  const auto whole = random_whole(rng, s, rng.real(0.2, 1.0), o.value_span);
  const auto shape = random_chunk_shape(rng, s);
  const bool sparse = rng.coin(o.sparse_prob);
  const int workers = static_cast<int>(rng.range(1, o.max_workers));
  return {assemble(s, whole, shape, sparse, workers), whole, shape};
}

/// A second array with the same schema box and chunking but fresh cells.
inline Array random_aligned(Rng& rng, const Generated& g, const std::string& name, std::int64_t span = 50,
                            std::optional<std::vector<aql::AttributeSpec>> attrs = std::nullopt) {
  auto s = g.array.schema;
  s.name = name;
  s.density = aql::Density::dense;
  if (attrs) s.attrs = *attrs;
  const auto whole = random_whole(rng, s, rng.real(0.2, 1.0), span);
  return assemble(s, whole, g.shape, g.array.schema.density == aql::Density::sparse, g.array.n_workers);
}

// ---------------------------------------------------------------------------
// Cell maps

using CellMap = std::map<Coord, std::vector<CellValue>>;

/// Valid cells of `a`, values in the given attribute order (default: chunk order).
inline CellMap cells(const Array& a, const std::vector<std::string>& attrs = {}) {
  CellMap out;
  for (const auto& c : a.chunks) {
    std::vector<std::size_t> idx;
    if (attrs.empty()) {
      for (std::size_t k = 0; k < c->attrs.size(); ++k) idx.push_back(k);
    } else {
      for (const auto& n : attrs) idx.push_back(*c->attr_index(n));
    }
    for (std::size_t r = 0, n = c->rows(); r < n; ++r) {
      if (!c->valid(r)) continue;
      std::vector<CellValue> v;
      for (auto k : idx) v.push_back(c->value(k, r));
      if (!out.emplace(c->coords(r), std::move(v)).second)
        throw std::runtime_error("duplicate cell " + std::to_string(c->coords(r)[0]));
    }
  }
  return out;
}

inline CellMap cells_of_chunk(const aql::Chunk& c) {
  CellMap out;
  for (std::size_t r = 0, n = c.rows(); r < n; ++r) {
    if (!c.valid(r)) continue;
    std::vector<CellValue> v;
    for (std::size_t k = 0; k < c.attrs.size(); ++k) v.push_back(c.value(k, r));
    out.emplace(c.coords(r), std::move(v));
  }
  return out;
}

inline bool close(const CellValue& a, const CellValue& b, double rel = 1e-9) {
  if (a.is_int() && b.is_int()) return a.as_int() == b.as_int();
  const double x = a.as_double(), y = b.as_double();
  if (x == y) return true;
  return std::abs(x - y) <= rel * std::max({1.0, std::abs(x), std::abs(y)});
}

inline std::string coord_text(const Coord& c) {
  std::string s = "(";
  for (std::size_t d = 0; d < c.size(); ++d) s += (d ? "," : "") + std::to_string(c[d]);
  return s + ")";
}

/// Empty when equal, otherwise the first difference.
inline std::string diff(const CellMap& got, const CellMap& want, double rel = 1e-9) {
  if (got.size() != want.size())
    return "cell count " + std::to_string(got.size()) + " vs expected " + std::to_string(want.size());
  auto g = got.begin();
  for (const auto& [k, v] : want) {
    if (!(g->first == k)) return "cell " + coord_text(g->first) + " where " + coord_text(k) + " expected";
    if (g->second.size() != v.size()) return "arity differs at " + coord_text(k);
    for (std::size_t i = 0; i < v.size(); ++i)
      if (!close(g->second[i], v[i], rel))
        return "value " + std::to_string(i) + " at " + coord_text(k) + ": " + g->second[i].to_string() + " vs " +
               v[i].to_string();
    ++g;
  }
  return {};
}

// ---------------------------------------------------------------------------
// Naive aggregates

struct NaiveAgg {
  aql::AggKind kind;
  std::vector<CellValue> seen;

  void add(const CellValue& v) { seen.push_back(v); }
  std::optional<CellValue> result(AttrKind input) const {
    using K = aql::AggKind;
    switch (kind) {
      case K::count:
        return CellValue(static_cast<std::int64_t>(seen.size()));
      case K::count_distinct: {
        std::set<std::int64_t> s;
        for (const auto& v : seen) s.insert(v.as_int());
        return CellValue(static_cast<std::int64_t>(s.size()));
      }
      default:
        break;
    }
    if (seen.empty()) return std::nullopt;
    if (kind == K::min || kind == K::max) {
      CellValue best = seen[0];
      for (const auto& v : seen)
        if (kind == K::min ? v < best : best < v) best = v;
      return best;
    }
    long double sum = 0;
    std::int64_t isum = 0;
    for (const auto& v : seen) {
      sum += v.as_double();
      isum += v.as_int();
    }
    if (kind == K::sum) return input == AttrKind::int64 ? CellValue(isum) : CellValue(static_cast<double>(sum));
    return CellValue(static_cast<double>(sum / static_cast<long double>(seen.size())));
  }
};

/// Reduce oracle: key = kept dimension coordinates.
inline std::map<Coord, std::vector<std::optional<CellValue>>> reduce_oracle(const Array& in,
                                                                             const std::vector<std::size_t>& keep,
                                                                             const std::vector<aql::AggSpec>& aggs) {
  std::map<Coord, std::vector<NaiveAgg>> groups;
  std::vector<std::optional<std::size_t>> col;
  std::vector<AttrKind> kinds;
  for (const auto& a : aggs) {
    if (a.attr.empty()) {
      col.push_back(std::nullopt);
      kinds.push_back(AttrKind::int64);
    } else {
      col.push_back(in.schema.require_attr(a.attr));
      kinds.push_back(in.schema.attrs[*col.back()].kind);
    }
  }
  for (const auto& [c, v] : cells(in, aql::attr_names(in.schema.attrs))) {
    Coord key(keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i) key[i] = c[keep[i]];
    auto [it, fresh] = groups.try_emplace(key);
    if (fresh)
      for (const auto& a : aggs) it->second.push_back({a.kind, {}});
    for (std::size_t i = 0; i < aggs.size(); ++i) it->second[i].add(col[i] ? v[*col[i]] : CellValue(std::int64_t{1}));
  }
  std::map<Coord, std::vector<std::optional<CellValue>>> out;
  for (const auto& [k, states] : groups)
    for (std::size_t i = 0; i < states.size(); ++i) out[k].push_back(states[i].result(kinds[i]));
  return out;
}

/// Whole-array neighborhood oracle for every-valid-cell origins.
inline CellMap apply_plus_oracle(const Array& in, const aql::ApplyPlusSpec& spec) {
  const auto names = aql::attr_names(in.schema.attrs);
  const CellMap all = cells(in, names);
  const Box box = in.schema.box();
  std::vector<std::optional<std::size_t>> col;
  std::vector<AttrKind> kinds;
  for (const auto& a : spec.aggs) {
    if (a.attr.empty()) {
      col.push_back(std::nullopt);
      kinds.push_back(AttrKind::int64);
    } else {
      col.push_back(in.schema.require_attr(a.attr));
      kinds.push_back(in.schema.attrs[*col.back()].kind);
    }
  }
  const std::size_t nd = box.dims();
  auto window_result = [&](const Coord& o, const Box& window) -> std::optional<std::vector<CellValue>> {
    std::vector<NaiveAgg> st;
    for (const auto& a : spec.aggs) st.push_back({a.kind, {}});
    (void)o;
    auto clipped = aql::box_intersect(window, box);
    if (clipped) {
      aql::for_each_cell(*clipped, [&](const Coord& c, std::uint64_t) {
        auto it = all.find(c);
        if (it == all.end()) return;
        for (std::size_t i = 0; i < st.size(); ++i)
          st[i].add(col[i] ? it->second[*col[i]] : CellValue(std::int64_t{1}));
      });
    }
    std::vector<CellValue> out;
    for (std::size_t i = 0; i < st.size(); ++i) {
      auto r = st[i].result(kinds[i]);
      if (!r) return std::nullopt;
      out.push_back(*r);
    }
    return out;
  };
  CellMap out;
  if (spec.patterns.empty()) {
    for (const auto& [o, v] : all) {
      Box w;
      std::vector<aql::Range> rs;
      for (std::size_t d = 0; d < nd; ++d) rs.push_back({o[d] + spec.shape.offsets[d].lo, o[d] + spec.shape.offsets[d].hi});
      if (auto r = window_result(o, Box(rs))) out.emplace(o, *r);
    }
    return out;
  }
  // Pattern origins, output indexed by origin rank per dimension.
  std::vector<std::vector<std::int64_t>> origins(nd);
  for (std::size_t d = 0; d < nd; ++d) {
    const auto& p = spec.patterns[d];
    for (std::int64_t x = box[d].lo; x <= box[d].hi; ++x)
      if (p[static_cast<std::size_t>(x - box[d].lo) % p.size()] == '1') origins[d].push_back(x);
  }
  std::vector<aql::Range> ranks;
  for (std::size_t d = 0; d < nd; ++d) {
    if (origins[d].empty()) return out;
    ranks.push_back({0, static_cast<std::int64_t>(origins[d].size()) - 1});
  }
  aql::for_each_cell(Box(ranks), [&](const Coord& rank, std::uint64_t) {
    Coord o(nd);
    std::vector<aql::Range> rs;
    for (std::size_t d = 0; d < nd; ++d) {
      const auto k = static_cast<std::size_t>(rank[d]);
      o[d] = origins[d][k];
      aql::Range r{o[d] + spec.shape.offsets[d].lo, o[d] + spec.shape.offsets[d].hi};
      if (spec.clip_to_next_origin && k + 1 < origins[d].size()) r.hi = std::min(r.hi, origins[d][k + 1] - 1);
      rs.push_back(r);
    }
    if (auto r = window_result(o, Box(rs))) out.emplace(rank, *r);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Cooking oracle: 8-connected flood fill over cells with v1 >= threshold.

/// Component index per above-threshold local cell of a 2-D (x, y) grid.
inline std::map<std::pair<std::int64_t, std::int64_t>, std::size_t> flood_fill(
    const std::vector<std::vector<std::int64_t>>& v1, std::int64_t threshold) {
  std::map<std::pair<std::int64_t, std::int64_t>, std::size_t> label;
  const auto nx = static_cast<std::int64_t>(v1.size());
  const auto ny = nx ? static_cast<std::int64_t>(v1[0].size()) : 0;
  std::size_t next = 0;
  for (std::int64_t x = 0; x < nx; ++x) {
    for (std::int64_t y = 0; y < ny; ++y) {
      if (v1[x][y] < threshold || label.count({x, y})) continue;
      std::vector<std::pair<std::int64_t, std::int64_t>> stack{{x, y}};
      label[{x, y}] = next;
      while (!stack.empty()) {
        const auto [cx, cy] = stack.back();
        stack.pop_back();
        for (std::int64_t dx = -1; dx <= 1; ++dx)
          for (std::int64_t dy = -1; dy <= 1; ++dy) {
            const auto px = cx + dx, py = cy + dy;
            if (px < 0 || py < 0 || px >= nx || py >= ny || v1[px][py] < threshold) continue;
            if (label.emplace(std::pair{px, py}, next).second) stack.emplace_back(px, py);
          }
      }
      ++next;
    }
  }
  return label;
}

/// True when two labelings induce the same partition of the same cell set.
template <typename A, typename B>
bool same_partition(const std::map<std::pair<std::int64_t, std::int64_t>, A>& a,
                    const std::map<std::pair<std::int64_t, std::int64_t>, B>& b) {
  if (a.size() != b.size()) return false;
  std::map<A, B> fwd;
  std::map<B, A> back;
  for (const auto& [cell, la] : a) {
    auto it = b.find(cell);
    if (it == b.end()) return false;
    const B lb = it->second;
    auto [f, fnew] = fwd.emplace(la, lb);
    auto [g, gnew] = back.emplace(lb, la);
    if (f->second != lb || g->second != la) return false;
    (void)fnew;
    (void)gnew;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Grouping oracle: quadratic sequential attachment.

inline std::map<std::int64_t, std::set<std::int64_t>> grouping_oracle(std::vector<aql::ssdb::ObsPoint> obs,
                                                                      const aql::ssdb::BenchConfig& cfg) {
  std::sort(obs.begin(), obs.end(), [](const auto& a, const auto& b) {
    return a.img_id != b.img_id ? a.img_id < b.img_id : a.obs_id < b.obs_id;
  });
  struct G {
    std::int64_t id;
    std::set<std::int64_t> members;
    double x, y;
    std::int64_t t;
  };
  std::vector<G> groups;
  std::size_t i = 0;
  while (i < obs.size()) {
    const auto t = obs[i].img_id;
    const std::vector<G> before = groups;
    std::map<std::size_t, std::vector<std::size_t>> joins;
    std::vector<std::size_t> seeds;
    for (; i < obs.size() && obs[i].img_id == t; ++i) {
      std::optional<std::size_t> best;
      double bd = 0;
      for (std::size_t g = 0; g < before.size(); ++g) {
        const double dx = obs[i].x - before[g].x, dy = obs[i].y - before[g].y;
        const double d2 = dx * dx + dy * dy;
        const double r = aql::ssdb::group_reach(cfg, t - before[g].t);
        if (d2 > r * r) continue;
        if (!best || d2 < bd || (d2 == bd && before[g].id < before[*best].id)) {
          best = g;
          bd = d2;
        }
      }
      if (best)
        joins[*best].push_back(i);
      else
        seeds.push_back(i);
    }
    for (const auto& [g, ks] : joins) {
      double sx = 0, sy = 0;
      for (auto k : ks) {
        groups[g].members.insert(obs[k].obs_id);
        sx += obs[k].x;
        sy += obs[k].y;
      }
      groups[g].x = sx / static_cast<double>(ks.size());
      groups[g].y = sy / static_cast<double>(ks.size());
      groups[g].t = t;
    }
    for (auto k : seeds) groups.push_back({obs[k].obs_id, {obs[k].obs_id}, obs[k].x, obs[k].y, t});
  }
  std::map<std::int64_t, std::set<std::int64_t>> out;
  for (const auto& g : groups) out[g.id] = g.members;
  return out;
}

/// Small desk-like benchmark configuration for fast tests.
inline aql::ssdb::BenchConfig tiny_config() {
  auto c = aql::ssdb::BenchConfig::desk();
  c.n_images = 4;
  c.cycle_size = 2;
  c.grid_extent = 200;
  c.domain_extent = 800;
  c.chunk_side = 50;
  c.n_workers = 3;
  c.objects_per_grid = 40;
  c.param_sets = 2;
  c.repetitions = 2;
  c.query.t1 = c.query.u1 = 60;
  c.query.t2 = c.query.u2 = 150;
  c.query.t3 = c.query.u3 = 60;
  c.query.d4 = 40;
  c.query.d5 = 1;
  return c;
}

}  // namespace aqltest
