#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "aql/aggregate.hpp"
#include "aql/apply_plus.hpp"
#include "aql/array_model.hpp"
#include "aql/storage.hpp"

namespace aql::ssdb {

inline constexpr int kAttrs = 11;

/// Slab positions and sizes of one query parameter configuration.
struct QueryParams {
  std::int64_t x1 = 100, y1 = 100, t1 = 200, u1 = 200;     // local slab (Q1-Q3)
  std::int64_t x2 = 0, y2 = 0, t2 = 400, u2 = 400;         // world slab (Q4-Q7)
  std::int64_t t3 = 200, u3 = 200;                         // world slab size (Q8, Q9)
  std::int64_t d4 = 150, d5 = 3, d6 = 5;
  int vi = 1;  // 1-based attribute index for Q1
  int oi = 1;  // 1-based observation attribute for Q4
  std::int64_t recook_threshold = 1500;  // Q2 clustering threshold
};

struct BenchConfig {
  std::int64_t n_images = 8;
  std::int64_t cycle_size = 4;
  std::int64_t grid_extent = 1000;
  std::int64_t domain_extent = 4000;
  std::int64_t chunk_side = 250;
  int n_workers = 4;
  std::uint64_t seed = 42;

  std::int64_t cook_threshold = 1000;
  std::int64_t objects_per_grid = 60;   // sky objects per grid_extent^2 of sky
  double object_max_radius = 6.0;
  double object_max_drift = 0.5;        // cells per image
  std::int64_t obs_max_bbox = 40;
  std::int64_t obs_max_poly_edges = 200;

  double group_radius = 6.0;
  double group_time_weight = 0.25;

  QueryParams query;
  std::int64_t param_sets = 5;
  std::int64_t repetitions = 10;

  /// Errors: non-positive extents, indivisible cycles or chunking, grid larger
  /// than the domain (config).
  void validate() const;
  std::int64_t n_cycles() const { return n_images / cycle_size; }
  std::int64_t chunks_per_image() const {
    const auto k = grid_extent / chunk_side;
    return k * k;
  }
  std::int64_t cells_per_image() const { return grid_extent * grid_extent; }

  static BenchConfig desk();
  /// 400 grids of 7,500^2 in cycles of 20 over a 10^8 plane, 750^2 chunks.
  static BenchConfig normal();
};

// Array names in the catalog.
inline constexpr const char* kImages = "images";
inline constexpr const char* kImageOrigin = "image_origin";
inline constexpr const char* kObs = "obs";
inline constexpr const char* kObsCenter = "obs_center";
inline constexpr const char* kGroupCenter = "group_center";
inline constexpr const char* kGroupCenterImg = "group_center_img";

std::string attr_name(int i);  // "v1" .. "v11"
std::string obs_attr_name(int i);  // "o1" .. "o11"

ArraySchema images_schema(const BenchConfig& cfg);
ArraySchema image_origin_schema(const BenchConfig& cfg);
ArraySchema obs_schema(const BenchConfig& cfg);
ArraySchema obs_center_schema(const BenchConfig& cfg);
ArraySchema group_center_schema(const BenchConfig& cfg);
ArraySchema group_center_img_schema(const BenchConfig& cfg);

// --- generation -------------------------------------------------------------

struct SkyObject {
  double cx = 0, cy = 0;  // world position at image 0
  double ax = 1, ay = 1;  // ellipse radii
  double vx = 0, vy = 0;  // drift per image
};

/// World origin of image `img` (deterministic in seed and img).
std::pair<std::int64_t, std::int64_t> image_origin(const BenchConfig& cfg, std::int64_t img);

/// Objects whose ellipse may touch image `img`.
std::vector<SkyObject> objects_near(const BenchConfig& cfg, std::int64_t img);

/// Dense chunk of raw values for `box` (img, x, y); only attributes 1..n_attrs.
Chunk generate_chunk(const BenchConfig& cfg, std::int64_t img, const Box& box, std::int64_t id, int n_attrs = kAttrs);

/// One image as an in-memory array chunked per the config, placed round-robin.
Array generate_image(const BenchConfig& cfg, std::int64_t img, int n_attrs = kAttrs);

struct LoadStats {
  std::uint64_t chunks = 0;
  std::uint64_t bytes = 0;
};

/// Writes `images` and `image_origin` into the catalog.
LoadStats generate(Catalog& catalog, const BenchConfig& cfg);

/// Reads back the image origins array.
std::vector<std::pair<std::int64_t, std::int64_t>> read_origins(const Catalog& catalog);

// --- cooking ----------------------------------------------------------------

struct Observation {
  std::int64_t obs_id = 0;
  std::int64_t img_id = 0;
  std::vector<std::pair<std::int64_t, std::int64_t>> cells;  // local (x, y), row-major order
  double center_x = 0, center_y = 0;                         // world
  Box bbox;                                                  // local x, y
  std::vector<std::pair<std::int64_t, std::int64_t>> polygon;  // vertex lattice points
  std::array<double, kAttrs> attrs{};
};

struct CookStats {
  std::int64_t iterations = 0;
  std::uint64_t labels = 0;
  std::uint64_t dropped = 0;
  std::uint64_t merge_bytes = 0;
};

/// Unique id of a local cell: img * grid_extent^2 + x * grid_extent + y.
std::int64_t cell_id(const BenchConfig& cfg, std::int64_t img, std::int64_t x, std::int64_t y);

/// Filters v1 >= threshold, assigns cell ids and iterates the 3x3 min-id
/// APPLY+ to its fixpoint. Output: same chunking, attribute "id".
Array label_cells(const Array& image, const BenchConfig& cfg, std::int64_t threshold, CookStats* stats = nullptr,
                  Boundary boundary = Boundary::merge);

/// One more min-id round over labels.
Array min_id_round(const Array& labels, const GlaOptions& options = {}, Boundary boundary = Boundary::merge);

/// True if both arrays hold the same valid cells with equal values.
bool same_cells(const Array& a, const Array& b);

/// Axis-aligned outer boundary of a cell set, clockwise, one vertex per corner.
std::vector<std::pair<std::int64_t, std::int64_t>> trace_polygon(
    const std::vector<std::pair<std::int64_t, std::int64_t>>& cells);

/// Full cooking of one image array (v1..v11 loaded) at `threshold`.
std::vector<Observation> cook_image(const Array& image, const BenchConfig& cfg, std::int64_t img,
                                    std::pair<std::int64_t, std::int64_t> origin, std::int64_t threshold,
                                    CookStats* stats = nullptr);

/// Cooks every image in the catalog and writes `obs` and `obs_center`.
CookStats cook(Catalog& catalog, const BenchConfig& cfg);

// --- grouping ---------------------------------------------------------------

struct ObsPoint {
  std::int64_t obs_id = 0;
  std::int64_t img_id = 0;  // global image id
  double x = 0, y = 0;      // world center
};

struct ObservationGroup {
  std::int64_t group_id = 0;  // obs_id of the seeding observation
  std::int64_t cycle = 0;
  std::vector<std::int64_t> members;  // obs ids, attachment order
  double center_x = 0, center_y = 0;
  std::map<std::int64_t, std::pair<double, double>> per_image;  // img_id -> center
  Box bbox;  // rounded member centers
};

/// Attachment radius for a time gap of `dt` images.
double group_reach(const BenchConfig& cfg, std::int64_t dt);

/// Groups one cycle's observations. Images are swept in time order; each
/// observation joins the nearest group whose latest per-image center is within
/// reach (ties: smaller group id), judged against the groups as they stood
/// after the previous image. Unattached observations start new groups.
std::vector<ObservationGroup> group_cycle(std::vector<ObsPoint> obs, std::int64_t cycle, const BenchConfig& cfg);

struct GroupStats {
  std::uint64_t groups = 0;
  std::uint64_t observations = 0;
  std::uint64_t merge_bytes = 0;
};

/// Groups every cycle (cycles run in parallel) and writes `group_center`,
/// `group_center_img`, and the group ids into `obs`.
GroupStats group(Catalog& catalog, const BenchConfig& cfg);

// --- queries ----------------------------------------------------------------

struct QueryResult {
  std::string name;
  Table table;
  std::uint64_t chunks_read = 0;
  std::uint64_t bytes_read = 0;
  std::optional<std::uint64_t> expected_chunks;  // exhaustive box-intersection count
  std::uint64_t merge_bytes = 0;
};

struct QueryContext {
  const Catalog& catalog;
  const BenchConfig& cfg;
  QueryParams params;
  int n_workers = 1;
};

QueryResult q1(const QueryContext& ctx);
QueryResult q2(const QueryContext& ctx);
QueryResult q3(const QueryContext& ctx);
QueryResult q4(const QueryContext& ctx);
QueryResult q5(const QueryContext& ctx);
QueryResult q6(const QueryContext& ctx);
QueryResult q7(const QueryContext& ctx);
QueryResult q8(const QueryContext& ctx);
QueryResult q9(const QueryContext& ctx);

/// Dispatches on 1..9 (else config error).
QueryResult run_query(int q, const QueryContext& ctx);

/// Seeded parameter configuration; world slabs are centered on image footprints.
QueryParams random_params(const BenchConfig& cfg, std::uint64_t seed);

/// Number of stored chunks of `array` whose box intersects `range` (linear scan).
std::uint64_t intersecting_chunks(const Catalog& catalog, const std::string& array, const Box& range);

}  // namespace aql::ssdb
