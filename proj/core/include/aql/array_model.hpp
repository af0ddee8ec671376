#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "aql/error.hpp"

namespace aql {

inline constexpr std::size_t kMaxDims = 8;

enum class AttrKind : std::uint8_t { int64 = 0, float64 = 1 };
enum class Density : std::uint8_t { dense = 0, sparse = 1 };
enum class Layout : std::uint8_t { dense_suppressed = 0, sparse_explicit = 1 };

std::string_view to_string(AttrKind kind);
AttrKind parse_attr_kind(std::string_view text);

// ---------------------------------------------------------------------------
// Scalars

/// Tagged int64/float64 scalar. Mixed arithmetic promotes to float64.
class CellValue {
 public:
  constexpr CellValue() = default;
  template <typename T>
    requires std::is_integral_v<T>
  constexpr CellValue(T v) : kind_(AttrKind::int64), i_(static_cast<std::int64_t>(v)) {}
  template <typename T>
    requires std::is_floating_point_v<T>
  constexpr CellValue(T v) : kind_(AttrKind::float64), f_(static_cast<double>(v)) {}

  constexpr AttrKind kind() const { return kind_; }
  constexpr bool is_int() const { return kind_ == AttrKind::int64; }
  constexpr std::int64_t as_int() const { return is_int() ? i_ : static_cast<std::int64_t>(f_); }
  constexpr double as_double() const { return is_int() ? static_cast<double>(i_) : f_; }

  /// Value converted to `kind` (int64 conversion truncates).
  CellValue cast(AttrKind kind) const;

  friend bool operator==(const CellValue& a, const CellValue& b);
  friend bool operator<(const CellValue& a, const CellValue& b);
  friend bool operator<=(const CellValue& a, const CellValue& b) { return !(b < a); }
  friend bool operator>(const CellValue& a, const CellValue& b) { return b < a; }
  friend bool operator>=(const CellValue& a, const CellValue& b) { return !(a < b); }

  std::string to_string() const;

 private:
  AttrKind kind_ = AttrKind::int64;
  union {
    std::int64_t i_ = 0;
    double f_;
  };
};

/// Raised by scalar arithmetic that has no defined result (division by zero).
class ArithmeticFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

CellValue operator+(const CellValue& a, const CellValue& b);
CellValue operator-(const CellValue& a, const CellValue& b);
CellValue operator*(const CellValue& a, const CellValue& b);
CellValue operator/(const CellValue& a, const CellValue& b);

// ---------------------------------------------------------------------------
// Coordinates and boxes

struct Range {
  std::int64_t lo = 0;
  std::int64_t hi = -1;

  std::int64_t extent() const { return hi - lo + 1; }
  bool contains(std::int64_t v) const { return lo <= v && v <= hi; }
  friend bool operator==(const Range&, const Range&) = default;
};

/// Fixed-capacity coordinate tuple.
class Coord {
 public:
  Coord() = default;
  explicit Coord(std::size_t n) : n_(static_cast<std::uint8_t>(n)) {}
  Coord(std::initializer_list<std::int64_t> values);

  std::size_t size() const { return n_; }
  std::int64_t& operator[](std::size_t d) { return v_[d]; }
  std::int64_t operator[](std::size_t d) const { return v_[d]; }
  std::span<const std::int64_t> values() const { return {v_.data(), n_}; }

  friend bool operator==(const Coord& a, const Coord& b) {
    return a.n_ == b.n_ && std::equal(a.v_.begin(), a.v_.begin() + a.n_, b.v_.begin());
  }
  friend bool operator<(const Coord& a, const Coord& b) {
    return std::lexicographical_compare(a.v_.begin(), a.v_.begin() + a.n_, b.v_.begin(),
                                        b.v_.begin() + b.n_);
  }

  std::size_t hash() const;

 private:
  std::array<std::int64_t, kMaxDims> v_{};
  std::uint8_t n_ = 0;
};

struct CoordHash {
  std::size_t operator()(const Coord& c) const { return c.hash(); }
};

/// Inclusive per-dimension ranges.
class Box {
 public:
  Box() = default;
  Box(std::initializer_list<Range> ranges);
  explicit Box(std::span<const Range> ranges);

  std::size_t dims() const { return n_; }
  Range& operator[](std::size_t d) { return r_[d]; }
  const Range& operator[](std::size_t d) const { return r_[d]; }
  std::span<const Range> ranges() const { return {r_.data(), n_}; }

  /// Number of cells; saturates at uint64 max.
  std::uint64_t volume() const;
  bool contains(const Coord& c) const;
  bool contains(const Box& other) const;
  Coord lower() const;
  Coord upper() const;
  Box translated(std::span<const std::int64_t> delta) const;
  std::string to_string() const;

  friend bool operator==(const Box& a, const Box& b) {
    return a.n_ == b.n_ && std::equal(a.r_.begin(), a.r_.begin() + a.n_, b.r_.begin());
  }

 private:
  std::array<Range, kMaxDims> r_{};
  std::uint8_t n_ = 0;
};

std::optional<Box> box_intersect(const Box& a, const Box& b);
bool boxes_overlap(const Box& a, const Box& b);

// ---------------------------------------------------------------------------
// Schema

struct DimensionSpec {
  std::string name;
  std::int64_t lo = 0;
  std::int64_t hi = 0;

  std::int64_t extent() const { return hi - lo + 1; }
  friend bool operator==(const DimensionSpec&, const DimensionSpec&) = default;
};

struct AttributeSpec {
  std::string name;
  AttrKind kind = AttrKind::int64;
  friend bool operator==(const AttributeSpec&, const AttributeSpec&) = default;
};

struct ArraySchema {
  std::string name;
  std::vector<DimensionSpec> dims;
  std::vector<AttributeSpec> attrs;
  Density density = Density::dense;
  /// Optional global offset of the local coordinate system; empty when absent.
  std::vector<std::int64_t> origin;

  /// Throws Errc::schema on empty dims, duplicate names, lo > hi or too many dims.
  void validate() const;
  Box box() const;
  std::optional<std::size_t> dim_index(std::string_view dim) const;
  std::optional<std::size_t> attr_index(std::string_view attr) const;
  std::size_t require_attr(std::string_view attr) const;
  std::size_t require_dim(std::string_view dim) const;

  friend bool operator==(const ArraySchema&, const ArraySchema&) = default;
};

// ---------------------------------------------------------------------------
// Columns, validity and zone metadata

using Column = std::variant<std::vector<std::int64_t>, std::vector<double>>;
using ColumnPtr = std::shared_ptr<const Column>;

AttrKind column_kind(const Column& c);
std::size_t column_size(const Column& c);
CellValue column_get(const Column& c, std::size_t i);
Column make_column(AttrKind kind, std::size_t n);

/// Packed validity bitmap, LSB-first within 64-bit words.
class Bitmap {
 public:
  Bitmap() = default;
  explicit Bitmap(std::size_t n, bool value = false);

  std::size_t size() const { return size_; }
  bool get(std::size_t i) const { return (words_[i >> 6] >> (i & 63)) & 1u; }
  void set(std::size_t i, bool v = true) {
    if (v)
      words_[i >> 6] |= std::uint64_t{1} << (i & 63);
    else
      words_[i >> 6] &= ~(std::uint64_t{1} << (i & 63));
  }
  std::size_t count() const;
  bool none() const { return count() == 0; }
  std::span<const std::uint64_t> words() const { return words_; }
  std::span<std::uint64_t> words() { return words_; }

  /// Calls fn(i) for every set bit in increasing order.
  template <typename Fn>
  void for_each_set(Fn&& fn) const {
    for (std::size_t w = 0; w < words_.size(); ++w) {
      std::uint64_t bits = words_[w];
      while (bits) {
        const int b = std::countr_zero(bits);
        fn(w * 64 + static_cast<std::size_t>(b));
        bits &= bits - 1;
      }
    }
  }

  friend bool operator==(const Bitmap&, const Bitmap&) = default;

 private:
  std::vector<std::uint64_t> words_;
  std::size_t size_ = 0;
};

/// (min, max) of a dimension or attribute. Empty when min > max.
struct ZoneRange {
  CellValue min;
  CellValue max;

  bool empty() const { return max < min; }
  bool overlaps(const CellValue& lo, const CellValue& hi) const;
  static ZoneRange empty_of(AttrKind kind);
  friend bool operator==(const ZoneRange&, const ZoneRange&) = default;
};

// ---------------------------------------------------------------------------
// Chunks

/// A rectangular sub-array stored column-wise. Immutable once built; column
/// storage is shared between chunks derived from one another.
struct Chunk {
  std::int64_t id = 0;
  Box box;  // global coordinates
  Layout layout = Layout::dense_suppressed;
  Bitmap validity;  // dense only, one bit per cell in row-major order
  std::vector<AttributeSpec> attrs;
  std::vector<ColumnPtr> columns;
  // Sparse only: per-dimension offsets relative to box lower corner, so that
  // SHIFT never touches cell data.
  std::vector<std::shared_ptr<const std::vector<std::int64_t>>> dim_offsets;
  std::vector<ZoneRange> dim_zone;
  std::vector<ZoneRange> attr_zone;

  bool dense() const { return layout == Layout::dense_suppressed; }
  std::size_t dims() const { return box.dims(); }
  std::size_t rows() const;
  std::size_t valid_count() const;
  bool valid(std::size_t row) const { return !dense() || validity.get(row); }
  Coord coords(std::size_t row) const;
  std::int64_t coord(std::size_t row, std::size_t d) const;
  CellValue value(std::size_t attr, std::size_t row) const { return column_get(*columns[attr], row); }
  std::optional<std::size_t> attr_index(std::string_view name) const;
  /// Bytes of attribute payload (rows x 8 per column).
  std::uint64_t payload_bytes() const;
};

using ChunkPtr = std::shared_ptr<const Chunk>;

/// Builds a dense-suppressed chunk whose attributes are `schema.attrs`.
/// Errors: length mismatch (schema), box outside schema bounds (domain).
Chunk make_dense_chunk(const ArraySchema& schema, std::int64_t id, const Box& box,
                       std::vector<Column> values, Bitmap validity);

/// Same, for an explicit attribute list (intermediate results, projections).
Chunk make_dense_chunk(std::int64_t id, const Box& box, std::vector<AttributeSpec> attrs,
                       std::vector<ColumnPtr> values, Bitmap validity);

/// Builds a sparse-explicit chunk from absolute coordinates, one vector per dimension.
Chunk make_sparse_chunk(std::int64_t id, const Box& box, std::vector<AttributeSpec> attrs,
                        const std::vector<std::vector<std::int64_t>>& coords,
                        std::vector<ColumnPtr> values);

/// Global coordinates of the cell at row-major `offset` of a dense chunk.
Coord cell_coords(const Chunk& chunk, std::uint64_t offset);
/// Inverse of cell_coords.
std::uint64_t cell_offset(const Chunk& chunk, const Coord& coords);
/// Row-major offset of `coords` inside `box`; caller guarantees containment.
std::uint64_t offset_in(const Box& box, const Coord& coords);
Coord coords_in(const Box& box, std::uint64_t offset);

/// Recomputes attribute zones (over valid cells) and dimension zones.
void compute_zones(Chunk& chunk);

/// Sparse chunk holding exactly the valid cells of `chunk` (identity for sparse input).
Chunk to_sparse(const Chunk& chunk);

/// Dense chunk holding the cells of `sub` (contained in the chunk box) of a dense chunk.
Chunk slice_dense(const Chunk& whole, const Box& sub, std::int64_t id);

/// Column holding `col[rows[i]]`.
Column gather(const Column& col, std::span<const std::size_t> rows);

/// Sparse chunk made of the given rows of a sparse chunk. Its box is `box` when
/// given, otherwise the tight bounding box of the rows (the source box if empty).
Chunk take_rows(const Chunk& sparse, std::span<const std::size_t> rows, std::int64_t id,
                const std::optional<Box>& box = std::nullopt);

// ---------------------------------------------------------------------------
// In-memory arrays

/// An array materialized as chunks with their worker placement.
struct Array {
  ArraySchema schema;
  std::vector<ChunkPtr> chunks;
  std::vector<int> placement;  // worker id per chunk
  int n_workers = 1;

  std::size_t valid_cells() const;
  int worker_of(std::size_t chunk_index) const {
    return placement.empty() ? 0 : placement[chunk_index];
  }
};

/// Row-major cell order within a box: calls fn(coord, offset).
template <typename Fn>
void for_each_cell(const Box& box, Fn&& fn) {
  const std::size_t n = box.dims();
  if (n == 0) return;
  for (std::size_t d = 0; d < n; ++d)
    if (box[d].extent() <= 0) return;
  Coord c = box.lower();
  std::uint64_t offset = 0;
  while (true) {
    fn(static_cast<const Coord&>(c), offset);
    ++offset;
    std::size_t d = n;
    while (d > 0) {
      --d;
      if (c[d] < box[d].hi) {
        ++c[d];
        break;
      }
      c[d] = box[d].lo;
      if (d == 0) return;
    }
  }
}

}  // namespace aql
