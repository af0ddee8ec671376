#include <cmath>
#include <future>
#include <unordered_map>

#include "aql/error.hpp"
#include "aql/gla.hpp"
#include "aql/ssdb.hpp"

namespace aql::ssdb {

double group_reach(const BenchConfig& cfg, std::int64_t dt) {
  return cfg.group_radius * (1.0 + cfg.group_time_weight * static_cast<double>(dt));
}

namespace {

struct Live {
  std::size_t group = 0;
  double x = 0, y = 0;  // latest per-image center
  std::int64_t t = 0;
};

struct CellKey {
  std::int64_t i, j;
  bool operator==(const CellKey&) const = default;
};
struct CellKeyHash {
  std::size_t operator()(const CellKey& k) const { return std::hash<std::int64_t>()(k.i * 1000003 ^ k.j); }
};

}  // namespace

std::vector<ObservationGroup> group_cycle(std::vector<ObsPoint> obs, std::int64_t cycle, const BenchConfig& cfg) {
  std::sort(obs.begin(), obs.end(),
            [](const ObsPoint& a, const ObsPoint& b) { return std::tie(a.img_id, a.obs_id) < std::tie(b.img_id, b.obs_id); });
  const double side = group_reach(cfg, cfg.cycle_size);
  auto cell_of = [&](double x, double y) {
    return CellKey{static_cast<std::int64_t>(std::floor(x / side)), static_cast<std::int64_t>(std::floor(y / side))};
  };

  std::vector<ObservationGroup> groups;
  std::vector<Live> live;  // per group
  std::unordered_map<CellKey, std::vector<std::size_t>, CellKeyHash> index;
  auto index_remove = [&](std::size_t g) {
    auto& v = index[cell_of(live[g].x, live[g].y)];
    v.erase(std::find(v.begin(), v.end(), g));
  };

  std::size_t i = 0;
  while (i < obs.size()) {
    const std::int64_t t = obs[i].img_id;
    std::size_t end = i;
    while (end < obs.size() && obs[end].img_id == t) ++end;

    // Decisions for this image use the groups as they stood before it.
    std::vector<std::pair<std::size_t, std::size_t>> joins;  // (group, obs index)
    std::vector<std::size_t> seeds;
    for (std::size_t k = i; k < end; ++k) {
      const ObsPoint& o = obs[k];
      const CellKey c = cell_of(o.x, o.y);
      std::optional<std::size_t> best;
      double best_d2 = 0;
      for (std::int64_t di = -1; di <= 1; ++di) {
        for (std::int64_t dj = -1; dj <= 1; ++dj) {
          auto it = index.find({c.i + di, c.j + dj});
          if (it == index.end()) continue;
          for (auto g : it->second) {
            const Live& l = live[g];
            const double dx = o.x - l.x, dy = o.y - l.y;
            const double d2 = dx * dx + dy * dy;
            const double r = group_reach(cfg, t - l.t);
            if (d2 > r * r) continue;
            if (!best || d2 < best_d2 || (d2 == best_d2 && groups[g].group_id < groups[*best].group_id)) {
              best = g;
              best_d2 = d2;
            }
          }
        }
      }
      if (best)
        joins.emplace_back(*best, k);
      else
        seeds.push_back(k);
    }

    std::map<std::size_t, std::vector<std::size_t>> by_group;
    for (auto [g, k] : joins) by_group[g].push_back(k);
    for (auto& [g, ks] : by_group) {
      double sx = 0, sy = 0;
      for (auto k : ks) {
        groups[g].members.push_back(obs[k].obs_id);
        sx += obs[k].x;
        sy += obs[k].y;
      }
      const double n = static_cast<double>(ks.size());
      groups[g].per_image[t] = {sx / n, sy / n};
      index_remove(g);
      live[g] = {g, sx / n, sy / n, t};
      index[cell_of(live[g].x, live[g].y)].push_back(g);
    }
    for (auto k : seeds) {
      ObservationGroup grp;
      grp.group_id = obs[k].obs_id;
      grp.cycle = cycle;
      grp.members = {obs[k].obs_id};
      grp.per_image[t] = {obs[k].x, obs[k].y};
      const std::size_t g = groups.size();
      groups.push_back(std::move(grp));
      live.push_back({g, obs[k].x, obs[k].y, t});
      index[cell_of(obs[k].x, obs[k].y)].push_back(g);
    }
    i = end;
  }

  std::unordered_map<std::int64_t, const ObsPoint*> by_id;
  for (const auto& o : obs) by_id[o.obs_id] = &o;
  for (auto& g : groups) {
    double sx = 0, sy = 0;
    std::int64_t x0 = 0, x1 = 0, y0 = 0, y1 = 0;
    bool first = true;
    for (auto id : g.members) {
      const ObsPoint& o = *by_id.at(id);
      sx += o.x;
      sy += o.y;
      const auto rx = std::llround(o.x), ry = std::llround(o.y);
      if (first) {
        x0 = x1 = rx;
        y0 = y1 = ry;
        first = false;
      }
      x0 = std::min<std::int64_t>(x0, rx);
      x1 = std::max<std::int64_t>(x1, rx);
      y0 = std::min<std::int64_t>(y0, ry);
      y1 = std::max<std::int64_t>(y1, ry);
    }
    const double n = static_cast<double>(g.members.size());
    g.center_x = sx / n;
    g.center_y = sy / n;
    g.bbox = Box{{x0, x1}, {y0, y1}};
  }
  std::sort(groups.begin(), groups.end(),
            [](const ObservationGroup& a, const ObservationGroup& b) { return a.group_id < b.group_id; });
  return groups;
}

namespace {

/// Gathers one cycle's observation centers; grouping runs in terminate.
class GroupingGla {
 public:
  static constexpr bool kChunkAtATime = true;

  GroupingGla(std::int64_t cycle, const BenchConfig* cfg) : cycle_(cycle), cfg_(cfg) {}

  void accumulate_chunk(const Chunk& c) {
    const auto id = c.attr_index("obs_id"), cx = c.attr_index("center_x"), cy = c.attr_index("center_y");
    if (!id || !cx || !cy) fail(Errc::schema, "grouping input lacks obs_id/center_x/center_y");
    for (std::size_t r = 0; r < c.rows(); ++r) {
      if (!c.valid(r)) continue;
      points_.push_back({c.value(*id, r).as_int(), c.coord(r, 0), c.value(*cx, r).as_double(),
                         c.value(*cy, r).as_double()});
    }
  }

  void local_merge(GroupingGla&& o) { points_.insert(points_.end(), o.points_.begin(), o.points_.end()); }

  void serialize(ByteWriter& out) const {
    out.put<std::uint64_t>(points_.size());
    for (const auto& p : points_) {
      out.put<std::int64_t>(p.obs_id);
      out.put<std::int64_t>(p.img_id);
      out.put<double>(p.x);
      out.put<double>(p.y);
    }
  }

  void remote_merge(ByteReader& in) {
    const auto n = in.get<std::uint64_t>();
    for (std::uint64_t i = 0; i < n; ++i) {
      ObsPoint p;
      p.obs_id = in.get<std::int64_t>();
      p.img_id = in.get<std::int64_t>();
      p.x = in.get<double>();
      p.y = in.get<double>();
      points_.push_back(p);
    }
  }

  std::vector<ObservationGroup> terminate() { return group_cycle(std::move(points_), cycle_, *cfg_); }

 private:
  std::int64_t cycle_;
  const BenchConfig* cfg_;
  std::vector<ObsPoint> points_;
};

}  // namespace

GroupStats group(Catalog& catalog, const BenchConfig& cfg) {
  cfg.validate();
  if (!catalog.has(kObsCenter) || !catalog.has(kObs)) fail(Errc::dependency, "grouping needs phase 'cook'");
  const auto nc = cfg.n_cycles();
  const int n = cfg.n_workers;

  std::vector<std::future<std::pair<std::vector<ObservationGroup>, std::uint64_t>>> jobs;
  for (std::int64_t cycle = 0; cycle < nc; ++cycle) {
    jobs.push_back(std::async(std::launch::async, [&, cycle] {
      const Box range{{cycle * cfg.cycle_size, (cycle + 1) * cfg.cycle_size - 1},
                      {0, cfg.domain_extent - 1},
                      {0, cfg.domain_extent - 1}};
      ScanOptions scan;
      scan.n_workers = n;
      const Array centers = load_array(catalog, kObsCenter, range, {}, scan);
      GlaOptions opt;
      opt.tree = AggregationTree::build(AggregationTree::Shape::star, n, static_cast<int>(cycle % n));
      auto run = run_gla<GroupingGla>(centers, [&] { return GroupingGla(cycle, &cfg); }, opt);
      return std::make_pair(std::move(run.result), run.stats.traffic_bytes());
    }));
  }
  std::vector<std::vector<ObservationGroup>> per_cycle;
  GroupStats stats;
  for (auto& j : jobs) {
    auto [groups, bytes] = j.get();
    stats.merge_bytes += bytes;
    per_cycle.push_back(std::move(groups));
  }

  const auto gc_schema = group_center_schema(cfg);
  const auto gci_schema = group_center_img_schema(cfg);
  catalog.create_array(gc_schema, n);
  catalog.create_array(gci_schema, n);
  std::unordered_map<std::int64_t, std::int64_t> group_of;
  for (std::int64_t cycle = 0; cycle < nc; ++cycle) {
    const auto& groups = per_cycle[static_cast<std::size_t>(cycle)];
    const int worker = static_cast<int>(cycle % n);
    stats.groups += groups.size();
    if (groups.empty()) continue;
    std::vector<std::vector<std::int64_t>> coords(3);
    std::vector<std::int64_t> ids, members, images;
    std::vector<double> xs, ys;
    std::map<std::int64_t, std::vector<const ObservationGroup*>> by_image;
    for (const auto& g : groups) {
      coords[0].push_back(cycle);
      coords[1].push_back(std::llround(g.center_x));
      coords[2].push_back(std::llround(g.center_y));
      ids.push_back(g.group_id);
      members.push_back(static_cast<std::int64_t>(g.members.size()));
      images.push_back(static_cast<std::int64_t>(g.per_image.size()));
      xs.push_back(g.center_x);
      ys.push_back(g.center_y);
      for (auto m : g.members) group_of[m] = g.group_id;
      for (const auto& [img, c] : g.per_image) by_image[img].push_back(&g);
      stats.observations += g.members.size();
    }
    std::vector<Range> box{{cycle, cycle}};
    for (std::size_t d = 1; d < 3; ++d) {
      const auto [lo, hi] = std::minmax_element(coords[d].begin(), coords[d].end());
      box.push_back({*lo, *hi});
    }
    catalog.put_chunk(kGroupCenter,
                      make_sparse_chunk(cycle, Box(std::span<const Range>(box)), gc_schema.attrs, coords,
                                        {std::make_shared<const Column>(std::move(ids)),
                                         std::make_shared<const Column>(std::move(members)),
                                         std::make_shared<const Column>(std::move(images)),
                                         std::make_shared<const Column>(std::move(xs)),
                                         std::make_shared<const Column>(std::move(ys))}),
                      worker);

    for (const auto& [img, gs] : by_image) {
      const std::int64_t pos = img - cycle * cfg.cycle_size;
      std::vector<std::vector<std::int64_t>> c4(4);
      std::vector<std::int64_t> gid;
      std::vector<double> px, py;
      for (const auto* g : gs) {
        const auto [x, y] = g->per_image.at(img);
        c4[0].push_back(cycle);
        c4[1].push_back(pos);
        c4[2].push_back(std::llround(x));
        c4[3].push_back(std::llround(y));
        gid.push_back(g->group_id);
        px.push_back(x);
        py.push_back(y);
      }
      std::vector<Range> b{{cycle, cycle}, {pos, pos}};
      for (std::size_t d = 2; d < 4; ++d) {
        const auto [lo, hi] = std::minmax_element(c4[d].begin(), c4[d].end());
        b.push_back({*lo, *hi});
      }
      catalog.put_chunk(kGroupCenterImg,
                        make_sparse_chunk(img, Box(std::span<const Range>(b)), gci_schema.attrs, c4,
                                          {std::make_shared<const Column>(std::move(gid)),
                                           std::make_shared<const Column>(std::move(px)),
                                           std::make_shared<const Column>(std::move(py))}),
                        static_cast<int>(img % n));
    }
  }
  catalog.commit(kGroupCenter);
  catalog.commit(kGroupCenterImg);

  // Record each member's group in obs.
  const Array obs = load_array(catalog, kObs);
  const auto obs_sch = obs_schema(cfg);
  catalog.create_array(obs_sch, n);
  for (std::size_t i = 0; i < obs.chunks.size(); ++i) {
    const Chunk& c = *obs.chunks[i];
    const auto& ids = std::get<std::vector<std::int64_t>>(*c.columns[0]);
    std::vector<std::int64_t> gids(ids.size(), -1);
    for (std::size_t r = 0; r < ids.size(); ++r) {
      auto it = group_of.find(ids[r]);
      if (it != group_of.end()) gids[r] = it->second;
    }
    Chunk out = c;
    out.columns[1] = std::make_shared<const Column>(std::move(gids));
    compute_zones(out);
    catalog.put_chunk(kObs, out, obs.worker_of(i));
  }
  catalog.commit(kObs);
  return stats;
}

}  // namespace aql::ssdb
