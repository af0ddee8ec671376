#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "aql/array_model.hpp"

namespace aql {

// ---------------------------------------------------------------------------
// Chunk files

inline constexpr std::uint16_t kChunkFormatVersion = 1;

/// Byte and chunk counters. Shared by all readers of one catalog.
struct IoStats {
  std::atomic<std::uint64_t> chunks_read{0};
  std::atomic<std::uint64_t> bytes_read{0};
  std::atomic<std::uint64_t> chunks_written{0};
  std::atomic<std::uint64_t> bytes_written{0};

  void reset() {
    chunks_read = 0;
    bytes_read = 0;
    chunks_written = 0;
    bytes_written = 0;
  }
};

/// Writes `chunk` in the little-endian chunk format. Returns bytes written.
std::uint64_t write_chunk(const Chunk& chunk, const std::filesystem::path& path);

/// Reads a chunk file. `attrs` names the stored attributes in file order.
/// With `columns`, only those attribute blocks are read (dimension names are
/// accepted and cost nothing); omitted attributes are absent from the result.
Chunk read_chunk(const std::filesystem::path& path, std::span<const AttributeSpec> attrs,
                 const std::optional<std::vector<std::string>>& columns = std::nullopt,
                 IoStats* stats = nullptr, std::int64_t chunk_id = 0,
                 std::span<const DimensionSpec> dims = {});

/// Structural equality: box, layout, validity, attributes, cell data, zones.
bool same_chunk(const Chunk& a, const Chunk& b);

// ---------------------------------------------------------------------------
// Chunking and placement

struct ChunkingStrategy {
  enum class Kind { regular, irregular };
  Kind kind = Kind::regular;
  std::vector<std::int64_t> shape;     // regular
  std::uint64_t target_cells = 0;      // irregular

  static ChunkingStrategy regular(std::vector<std::int64_t> shape) { return {Kind::regular, std::move(shape), 0}; }
  static ChunkingStrategy irregular(std::uint64_t target) { return {Kind::irregular, {}, target}; }
};

/// Number of regular chunks covering `box`: product of ceil(extent/shape).
std::uint64_t regular_chunk_count(const Box& box, std::span<const std::int64_t> shape);
/// Regular chunk boxes in row-major chunk-grid order, clipped at the box edge.
std::vector<Box> regular_chunk_boxes(const Box& box, std::span<const std::int64_t> shape);

/// Splits the cells of `whole` (dense or sparse, covering part or all of the
/// schema box) into chunks numbered from `first_id`. Dense input requires a
/// regular strategy. Sparse chunks get tight bounding boxes; empty ones are dropped.
std::vector<Chunk> chunk_array(const ArraySchema& schema, const Chunk& whole, const ChunkingStrategy& strategy,
                               std::int64_t first_id = 0);

enum class PlacementPolicy { round_robin, random };

/// Worker per chunk id. Round-robin is `id mod n_workers`.
std::vector<int> place_chunks(std::span<const std::int64_t> chunk_ids, int n_workers,
                              PlacementPolicy policy = PlacementPolicy::round_robin, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Catalog

struct ChunkEntry {
  std::int64_t id = 0;
  int worker = 0;
  std::string file;  // relative to the array directory
  std::uint64_t rows = 0;
  Box box;
  std::vector<ZoneRange> dim_zone;
  std::vector<ZoneRange> attr_zone;
};

struct CatalogEntry {
  ArraySchema schema;
  int n_workers = 1;
  std::vector<ChunkEntry> chunks;  // sorted by id

  const ChunkEntry& chunk(std::int64_t id) const;
  std::vector<std::int64_t> chunk_ids() const;
};

/// Inclusive range condition on one attribute, used for zone pruning.
struct AttrRange {
  std::string attr;
  CellValue lo;
  CellValue hi;
};

/// Ids of the chunks whose box and dimension zones intersect `range` and whose
/// attribute zones overlap every predicate range.
std::vector<std::int64_t> prune(const CatalogEntry& entry, const Box& range,
                                std::span<const AttrRange> predicates = {});

/// Arrays persisted under `<root>/<array>/`, one `<chunk_id>.chk` file per chunk
/// plus a text `manifest.txt`. Registration is single-writer; lookups and reads
/// are safe from many threads.
class Catalog {
 public:
  explicit Catalog(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }

  /// Starts a fresh array, deleting any previous files of that name.
  void create_array(const ArraySchema& schema, int n_workers);
  /// Writes a chunk file and records it. Thread-safe.
  void put_chunk(const std::string& array, const Chunk& chunk, int worker);
  /// Sorts the chunk index and writes the manifest.
  void commit(const std::string& array);

  bool has(const std::string& array) const;
  /// Throws Errc::catalog for unknown arrays.
  const CatalogEntry& entry(const std::string& array) const;
  std::vector<std::string> arrays() const;

  ChunkPtr read(const std::string& array, const ChunkEntry& chunk,
                const std::optional<std::vector<std::string>>& columns = std::nullopt) const;
  std::filesystem::path chunk_path(const std::string& array, const ChunkEntry& chunk) const;

  IoStats& io() const { return io_; }

 private:
  CatalogEntry& mutable_entry(const std::string& array);

  std::filesystem::path root_;
  mutable std::mutex mu_;
  mutable std::map<std::string, CatalogEntry> entries_;
  mutable IoStats io_;
};

void write_manifest(const CatalogEntry& entry, const std::filesystem::path& path);
CatalogEntry read_manifest(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Scan

struct ScanOptions {
  std::size_t max_inflight = 4;  // per worker
  /// When set, chunks are reassigned to `stored_worker mod n_workers`.
  std::optional<int> n_workers;
  std::optional<std::vector<std::string>> columns;
};

struct ScanStats {
  std::uint64_t delivered = 0;
  std::size_t peak_inflight = 0;  // max concurrent chunks on any worker
};

using ChunkSink = std::function<void(const ChunkPtr& chunk, int worker)>;

/// Delivers each chunk exactly once, from per-worker reader threads. The sink
/// may be called concurrently. The first exception stops the scan and is rethrown.
ScanStats scan(const Catalog& catalog, const std::string& array, std::span<const std::int64_t> chunk_ids,
               const ChunkSink& sink, const ScanOptions& options = {});

/// Reads the pruned chunks of an array into memory.
Array load_array(const Catalog& catalog, const std::string& array, const std::optional<Box>& range = std::nullopt,
                 std::span<const AttrRange> predicates = {}, const ScanOptions& options = {});

}  // namespace aql
