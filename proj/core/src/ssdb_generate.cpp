#include <cmath>

#include "aql/error.hpp"
#include "aql/ssdb.hpp"

namespace aql::ssdb {

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t hash4(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
  return mix(seed ^ mix(a ^ mix(b ^ mix(c ^ mix(d)))));
}

double u01(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

// Stream tags keep the different draws independent.
enum Tag : std::uint64_t { kOrigin = 1, kObject = 2, kCell = 3 };

}  // namespace

void BenchConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) fail(Errc::config, what);
  };
  need(n_images > 0 && cycle_size > 0 && grid_extent > 0 && domain_extent > 0 && chunk_side > 0,
       "extents and counts must be positive");
  need(n_images % cycle_size == 0, "n_images must be divisible by cycle_size");
  need(grid_extent % chunk_side == 0, "grid_extent must be divisible by chunk_side");
  need(grid_extent <= domain_extent, "grid_extent " + std::to_string(grid_extent) + " exceeds domain_extent " +
                                         std::to_string(domain_extent));
  need(n_workers > 0, "n_workers must be positive");
  need(cook_threshold > 0, "cook_threshold must be positive");
  need(objects_per_grid >= 0 && object_max_radius >= 1.0 && object_max_drift >= 0.0, "bad sky object parameters");
  need(obs_max_bbox > 0 && obs_max_poly_edges >= 4, "bad observation limits");
  need(group_radius > 0 && group_time_weight >= 0, "bad grouping parameters");
  need(param_sets > 0 && repetitions > 0, "param_sets and repetitions must be positive");
  const auto& q = query;
  need(q.t1 >= 0 && q.u1 >= 0 && q.t2 >= 0 && q.u2 >= 0 && q.t3 >= 0 && q.u3 >= 0, "slab sizes must be non-negative");
  need(q.d4 >= 1 && q.d5 >= 1 && q.d6 >= 0, "bad D4/D5/D6");
  need(q.vi >= 1 && q.vi <= kAttrs && q.oi >= 1 && q.oi <= kAttrs, "attribute index out of 1..11");
  need(q.recook_threshold > 0, "recook threshold must be positive");
}

BenchConfig BenchConfig::desk() { return BenchConfig{}; }

BenchConfig BenchConfig::normal() {
  BenchConfig c;
  c.n_images = 400;
  c.cycle_size = 20;
  c.grid_extent = 7500;
  c.domain_extent = 100000000;
  c.chunk_side = 750;
  c.n_workers = 8;
  return c;
}

std::string attr_name(int i) { return "v" + std::to_string(i); }
std::string obs_attr_name(int i) { return "o" + std::to_string(i); }

ArraySchema images_schema(const BenchConfig& cfg) {
  ArraySchema s;
  s.name = kImages;
  s.dims = {{"img_id", 0, cfg.n_images - 1}, {"x", 0, cfg.grid_extent - 1}, {"y", 0, cfg.grid_extent - 1}};
  for (int i = 1; i <= kAttrs; ++i) s.attrs.push_back({attr_name(i), AttrKind::int64});
  s.density = Density::dense;
  return s;
}

ArraySchema image_origin_schema(const BenchConfig& cfg) {
  ArraySchema s;
  s.name = kImageOrigin;
  s.dims = {{"img_id", 0, cfg.n_images - 1}};
  s.attrs = {{"x", AttrKind::int64}, {"y", AttrKind::int64}};
  return s;
}

ArraySchema obs_schema(const BenchConfig& cfg) {
  ArraySchema s;
  s.name = kObs;
  s.dims = {{"img_id", 0, cfg.n_images - 1}, {"x", 0, cfg.grid_extent - 1}, {"y", 0, cfg.grid_extent - 1}};
  s.attrs = {{"obs_id", AttrKind::int64}, {"group_id", AttrKind::int64}};
  s.density = Density::sparse;
  return s;
}

ArraySchema obs_center_schema(const BenchConfig& cfg) {
  ArraySchema s;
  s.name = kObsCenter;
  s.dims = {{"img_id", 0, cfg.n_images - 1}, {"cx", 0, cfg.domain_extent - 1}, {"cy", 0, cfg.domain_extent - 1}};
  s.attrs = {{"obs_id", AttrKind::int64},
             {"n_cells", AttrKind::int64},
             {"edges", AttrKind::int64},
             {"center_x", AttrKind::float64},
             {"center_y", AttrKind::float64}};
  for (int i = 1; i <= kAttrs; ++i) s.attrs.push_back({obs_attr_name(i), AttrKind::float64});
  s.density = Density::sparse;
  return s;
}

ArraySchema group_center_schema(const BenchConfig& cfg) {
  ArraySchema s;
  s.name = kGroupCenter;
  s.dims = {{"cycle", 0, cfg.n_cycles() - 1}, {"cx", 0, cfg.domain_extent - 1}, {"cy", 0, cfg.domain_extent - 1}};
  s.attrs = {{"group_id", AttrKind::int64},
             {"members", AttrKind::int64},
             {"images", AttrKind::int64},
             {"center_x", AttrKind::float64},
             {"center_y", AttrKind::float64}};
  s.density = Density::sparse;
  return s;
}

ArraySchema group_center_img_schema(const BenchConfig& cfg) {
  ArraySchema s;
  s.name = kGroupCenterImg;
  s.dims = {{"cycle", 0, cfg.n_cycles() - 1},
            {"img_id", 0, cfg.cycle_size - 1},
            {"cx", 0, cfg.domain_extent - 1},
            {"cy", 0, cfg.domain_extent - 1}};
  s.attrs = {{"group_id", AttrKind::int64}, {"center_x", AttrKind::float64}, {"center_y", AttrKind::float64}};
  s.density = Density::sparse;
  return s;
}

std::pair<std::int64_t, std::int64_t> image_origin(const BenchConfig& cfg, std::int64_t img) {
  const double span = static_cast<double>(cfg.domain_extent - cfg.grid_extent);
  const double mean = span / 2.0;
  const double sigma = static_cast<double>(cfg.domain_extent) / 8.0;
  // Box-Muller pairs, redrawn until both coordinates fall inside the domain.
  for (std::uint64_t k = 0;; ++k) {
    const double u1 = u01(hash4(cfg.seed, kOrigin, static_cast<std::uint64_t>(img), k, 0));
    const double u2 = u01(hash4(cfg.seed, kOrigin, static_cast<std::uint64_t>(img), k, 1));
    const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
    const double x = mean + sigma * r * std::cos(2.0 * M_PI * u2);
    const double y = mean + sigma * r * std::sin(2.0 * M_PI * u2);
    const double rx = std::round(x), ry = std::round(y);
    if (rx >= 0 && rx <= span && ry >= 0 && ry <= span)
      return {static_cast<std::int64_t>(rx), static_cast<std::int64_t>(ry)};
    if (k > 10000) return {static_cast<std::int64_t>(mean), static_cast<std::int64_t>(mean)};
  }
}

std::vector<SkyObject> objects_near(const BenchConfig& cfg, std::int64_t img) {
  const auto [ox, oy] = image_origin(cfg, img);
  const double t = static_cast<double>(img);
  const double margin = cfg.object_max_radius + cfg.object_max_drift * t + 1.0;
  const std::int64_t side = cfg.grid_extent;
  const double lo_x = static_cast<double>(ox) - margin, hi_x = static_cast<double>(ox + side - 1) + margin;
  const double lo_y = static_cast<double>(oy) - margin, hi_y = static_cast<double>(oy + side - 1) + margin;
  const std::int64_t last_tile = (cfg.domain_extent - 1) / side;
  auto tile = [&](double v) {
    return std::clamp(static_cast<std::int64_t>(std::floor(v / static_cast<double>(side))), std::int64_t{0}, last_tile);
  };
  std::vector<SkyObject> out;
  for (std::int64_t tx = tile(lo_x); tx <= tile(hi_x); ++tx) {
    for (std::int64_t ty = tile(lo_y); ty <= tile(hi_y); ++ty) {
      for (std::int64_t k = 0; k < cfg.objects_per_grid; ++k) {
        auto draw = [&](std::uint64_t field) {
          return u01(hash4(cfg.seed, kObject, static_cast<std::uint64_t>(tx * (last_tile + 1) + ty),
                           static_cast<std::uint64_t>(k), field));
        };
        SkyObject o;
        o.cx = static_cast<double>(tx * side) + draw(0) * static_cast<double>(side);
        o.cy = static_cast<double>(ty * side) + draw(1) * static_cast<double>(side);
        if (o.cx > static_cast<double>(cfg.domain_extent - 1) || o.cy > static_cast<double>(cfg.domain_extent - 1))
          continue;
        o.ax = 1.0 + draw(2) * (cfg.object_max_radius - 1.0);
        o.ay = 1.0 + draw(3) * (cfg.object_max_radius - 1.0);
        o.vx = (2.0 * draw(4) - 1.0) * cfg.object_max_drift;
        o.vy = (2.0 * draw(5) - 1.0) * cfg.object_max_drift;
        const double px = o.cx + o.vx * t, py = o.cy + o.vy * t;
        if (px + o.ax < lo_x + margin - 1 || px - o.ax > hi_x - margin + 1) continue;
        if (py + o.ay < lo_y + margin - 1 || py - o.ay > hi_y - margin + 1) continue;
        out.push_back(o);
      }
    }
  }
  return out;
}

namespace {

Chunk render(const BenchConfig& cfg, std::int64_t img, const Box& box, std::int64_t id, int n_attrs,
             const std::vector<SkyObject>& objects, std::pair<std::int64_t, std::int64_t> origin) {
  if (box.dims() != 3 || box[0].lo != img || box[0].hi != img) fail(Errc::config, "image chunk box must fix img_id");
  const std::int64_t nx = box[1].extent(), ny = box[2].extent();
  const std::size_t cells = static_cast<std::size_t>(nx * ny);
  const double t = static_cast<double>(img);

  std::vector<std::uint8_t> bright(cells, 0);
  for (const auto& o : objects) {
    const double px = o.cx + o.vx * t - static_cast<double>(origin.first);
    const double py = o.cy + o.vy * t - static_cast<double>(origin.second);
    const auto x0 = std::max(box[1].lo, static_cast<std::int64_t>(std::ceil(px - o.ax)));
    const auto x1 = std::min(box[1].hi, static_cast<std::int64_t>(std::floor(px + o.ax)));
    const auto y0 = std::max(box[2].lo, static_cast<std::int64_t>(std::ceil(py - o.ay)));
    const auto y1 = std::min(box[2].hi, static_cast<std::int64_t>(std::floor(py + o.ay)));
    for (std::int64_t x = x0; x <= x1; ++x) {
      for (std::int64_t y = y0; y <= y1; ++y) {
        const double dx = (static_cast<double>(x) - px) / o.ax, dy = (static_cast<double>(y) - py) / o.ay;
        if (dx * dx + dy * dy <= 1.0)
          bright[static_cast<std::size_t>((x - box[1].lo) * ny + (y - box[2].lo))] = 1;
      }
    }
  }

  const std::uint64_t T = static_cast<std::uint64_t>(cfg.cook_threshold);
  std::vector<AttributeSpec> attrs;
  std::vector<ColumnPtr> cols;
  for (int k = 1; k <= n_attrs; ++k) {
    std::vector<std::int64_t> v(cells);
    std::size_t i = 0;
    for (std::int64_t x = box[1].lo; x <= box[1].hi; ++x) {
      for (std::int64_t y = box[2].lo; y <= box[2].hi; ++y, ++i) {
        const std::uint64_t h = hash4(cfg.seed, kCell + (static_cast<std::uint64_t>(k) << 8),
                                      static_cast<std::uint64_t>(img), static_cast<std::uint64_t>(x),
                                      static_cast<std::uint64_t>(y));
        v[i] = static_cast<std::int64_t>(bright[i] ? T + h % (3 * T + 1) : h % (T / 2 + 1));
      }
    }
    attrs.push_back({attr_name(k), AttrKind::int64});
    cols.push_back(std::make_shared<const Column>(std::move(v)));
  }
  return make_dense_chunk(id, box, std::move(attrs), std::move(cols), Bitmap(cells, true));
}

}  // namespace

Chunk generate_chunk(const BenchConfig& cfg, std::int64_t img, const Box& box, std::int64_t id, int n_attrs) {
  return render(cfg, img, box, id, n_attrs, objects_near(cfg, img), image_origin(cfg, img));
}

Array generate_image(const BenchConfig& cfg, std::int64_t img, int n_attrs) {
  cfg.validate();
  if (img < 0 || img >= cfg.n_images) fail(Errc::domain, "image " + std::to_string(img) + " out of range");
  if (n_attrs < 1 || n_attrs > kAttrs) fail(Errc::config, "attribute count out of 1..11");
  Array a;
  a.schema = images_schema(cfg);
  a.schema.attrs.resize(static_cast<std::size_t>(n_attrs));
  a.n_workers = cfg.n_workers;
  const auto objects = objects_near(cfg, img);
  const auto origin = image_origin(cfg, img);
  const Box whole{{img, img}, {0, cfg.grid_extent - 1}, {0, cfg.grid_extent - 1}};
  const std::vector<std::int64_t> shape{1, cfg.chunk_side, cfg.chunk_side};
  const auto boxes = regular_chunk_boxes(whole, shape);
  for (std::size_t k = 0; k < boxes.size(); ++k) {
    const std::int64_t id = img * cfg.chunks_per_image() + static_cast<std::int64_t>(k);
    a.chunks.push_back(std::make_shared<const Chunk>(render(cfg, img, boxes[k], id, n_attrs, objects, origin)));
    a.placement.push_back(static_cast<int>(id % cfg.n_workers));
  }
  return a;
}

LoadStats generate(Catalog& catalog, const BenchConfig& cfg) {
  cfg.validate();
  const std::uint64_t chunks0 = catalog.io().chunks_written, bytes0 = catalog.io().bytes_written;
  catalog.create_array(images_schema(cfg), cfg.n_workers);
  for (std::int64_t img = 0; img < cfg.n_images; ++img) {
    const Array a = generate_image(cfg, img);
    for (std::size_t k = 0; k < a.chunks.size(); ++k) catalog.put_chunk(kImages, *a.chunks[k], a.placement[k]);
  }
  catalog.commit(kImages);

  catalog.create_array(image_origin_schema(cfg), cfg.n_workers);
  std::vector<std::int64_t> xs, ys;
  for (std::int64_t img = 0; img < cfg.n_images; ++img) {
    const auto [x, y] = image_origin(cfg, img);
    xs.push_back(x);
    ys.push_back(y);
  }
  const auto n = static_cast<std::size_t>(cfg.n_images);
  std::vector<ColumnPtr> cols{std::make_shared<const Column>(std::move(xs)), std::make_shared<const Column>(std::move(ys))};
  catalog.put_chunk(kImageOrigin,
                    make_dense_chunk(0, Box{{0, cfg.n_images - 1}}, image_origin_schema(cfg).attrs, std::move(cols),
                                     Bitmap(n, true)),
                    0);
  catalog.commit(kImageOrigin);
  return {catalog.io().chunks_written - chunks0, catalog.io().bytes_written - bytes0};
}

std::vector<std::pair<std::int64_t, std::int64_t>> read_origins(const Catalog& catalog) {
  const Array a = load_array(catalog, kImageOrigin);
  std::vector<std::pair<std::int64_t, std::int64_t>> out(static_cast<std::size_t>(a.schema.dims[0].extent()));
  for (const auto& c : a.chunks) {
    for (std::size_t r = 0; r < c->rows(); ++r) {
      if (!c->valid(r)) continue;
      const auto img = c->coord(r, 0);
      out[static_cast<std::size_t>(img - a.schema.dims[0].lo)] = {c->value(0, r).as_int(), c->value(1, r).as_int()};
    }
  }
  return out;
}

std::uint64_t intersecting_chunks(const Catalog& catalog, const std::string& array, const Box& range) {
  std::uint64_t n = 0;
  for (const auto& c : catalog.entry(array).chunks)
    if (boxes_overlap(c.box, range)) ++n;
  return n;
}

}  // namespace aql::ssdb
