#include "aql/array_model.hpp"

#include <cmath>
#include <cstring>
#include <sstream>
#include <unordered_set>

namespace aql {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::schema: return "schema";
    case Errc::domain: return "domain";
    case Errc::layout: return "layout";
    case Errc::config: return "config";
    case Errc::format: return "format";
    case Errc::io: return "io";
    case Errc::mode: return "mode";
    case Errc::shape: return "shape";
    case Errc::unsupported: return "unsupported-layout";
    case Errc::catalog: return "catalog";
    case Errc::contract: return "contract";
    case Errc::dependency: return "dependency";
    case Errc::parse: return "parse";
    case Errc::cycle: return "cycle";
    case Errc::internal: return "internal";
  }
  return "unknown";
}

std::string_view to_string(AttrKind kind) {
  return kind == AttrKind::int64 ? "int64" : "float64";
}

AttrKind parse_attr_kind(std::string_view text) {
  if (text == "int64") return AttrKind::int64;
  if (text == "float64") return AttrKind::float64;
  fail(Errc::schema, "unknown attribute kind '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// CellValue

CellValue CellValue::cast(AttrKind kind) const {
  if (kind == kind_) return *this;
  if (kind == AttrKind::int64) return CellValue(static_cast<std::int64_t>(f_));
  return CellValue(static_cast<double>(i_));
}

bool operator==(const CellValue& a, const CellValue& b) {
  if (a.is_int() && b.is_int()) return a.i_ == b.i_;
  return a.as_double() == b.as_double();
}

bool operator<(const CellValue& a, const CellValue& b) {
  if (a.is_int() && b.is_int()) return a.i_ < b.i_;
  return a.as_double() < b.as_double();
}

std::string CellValue::to_string() const {
  if (is_int()) return std::to_string(i_);
  std::ostringstream os;
  os.precision(17);
  os << f_;
  return os.str();
}

CellValue operator+(const CellValue& a, const CellValue& b) {
  if (a.is_int() && b.is_int()) return CellValue(a.as_int() + b.as_int());
  return CellValue(a.as_double() + b.as_double());
}

CellValue operator-(const CellValue& a, const CellValue& b) {
  if (a.is_int() && b.is_int()) return CellValue(a.as_int() - b.as_int());
  return CellValue(a.as_double() - b.as_double());
}

CellValue operator*(const CellValue& a, const CellValue& b) {
  if (a.is_int() && b.is_int()) return CellValue(a.as_int() * b.as_int());
  return CellValue(a.as_double() * b.as_double());
}

CellValue operator/(const CellValue& a, const CellValue& b) {
  if (a.is_int() && b.is_int()) {
    if (b.as_int() == 0) throw ArithmeticFault("integer division by zero");
    return CellValue(a.as_int() / b.as_int());
  }
  if (b.as_double() == 0.0) throw ArithmeticFault("division by zero");
  return CellValue(a.as_double() / b.as_double());
}

// ---------------------------------------------------------------------------
// Coord / Box

Coord::Coord(std::initializer_list<std::int64_t> values) : n_(static_cast<std::uint8_t>(values.size())) {
  if (values.size() > kMaxDims) fail(Errc::domain, "too many dimensions");
  std::copy(values.begin(), values.end(), v_.begin());
}

std::size_t Coord::hash() const {
  std::uint64_t h = 0x9E3779B97F4A7C15ull ^ n_;
  for (std::size_t d = 0; d < n_; ++d) {
    std::uint64_t x = static_cast<std::uint64_t>(v_[d]) + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2);
    x ^= x >> 31;
    x *= 0xBF58476D1CE4E5B9ull;
    x ^= x >> 29;
    h ^= x;
  }
  return static_cast<std::size_t>(h);
}

Box::Box(std::initializer_list<Range> ranges) : Box(std::span<const Range>(ranges.begin(), ranges.size())) {}

Box::Box(std::span<const Range> ranges) : n_(static_cast<std::uint8_t>(ranges.size())) {
  if (ranges.size() > kMaxDims) fail(Errc::domain, "too many dimensions");
  std::copy(ranges.begin(), ranges.end(), r_.begin());
}

std::uint64_t Box::volume() const {
  if (n_ == 0) return 0;
  constexpr auto kMax = std::numeric_limits<std::uint64_t>::max();
  std::uint64_t v = 1;
  for (std::size_t d = 0; d < n_; ++d) {
    if (r_[d].hi < r_[d].lo) return 0;
    const std::uint64_t ext = static_cast<std::uint64_t>(r_[d].hi) - static_cast<std::uint64_t>(r_[d].lo) + 1;
    if (ext == 0 || v > kMax / ext) return kMax;
    v *= ext;
  }
  return v;
}

bool Box::contains(const Coord& c) const {
  if (c.size() != n_) return false;
  for (std::size_t d = 0; d < n_; ++d)
    if (!r_[d].contains(c[d])) return false;
  return true;
}

bool Box::contains(const Box& other) const {
  if (other.n_ != n_) return false;
  for (std::size_t d = 0; d < n_; ++d)
    if (other.r_[d].lo < r_[d].lo || other.r_[d].hi > r_[d].hi) return false;
  return true;
}

Coord Box::lower() const {
  Coord c(n_);
  for (std::size_t d = 0; d < n_; ++d) c[d] = r_[d].lo;
  return c;
}

Coord Box::upper() const {
  Coord c(n_);
  for (std::size_t d = 0; d < n_; ++d) c[d] = r_[d].hi;
  return c;
}

Box Box::translated(std::span<const std::int64_t> delta) const {
  if (delta.size() != n_) fail(Errc::domain, "shift dimensionality mismatch");
  Box out = *this;
  for (std::size_t d = 0; d < n_; ++d) {
    if (__builtin_add_overflow(r_[d].lo, delta[d], &out.r_[d].lo) ||
        __builtin_add_overflow(r_[d].hi, delta[d], &out.r_[d].hi))
      fail(Errc::domain, "index overflow while shifting box " + to_string());
  }
  return out;
}

std::string Box::to_string() const {
  std::string s = "[";
  for (std::size_t d = 0; d < n_; ++d) {
    if (d) s += ",";
    s += std::to_string(r_[d].lo) + ":" + std::to_string(r_[d].hi);
  }
  return s + "]";
}

std::optional<Box> box_intersect(const Box& a, const Box& b) {
  if (a.dims() != b.dims()) fail(Errc::domain, "box dimensionality mismatch");
  Box out = a;
  for (std::size_t d = 0; d < a.dims(); ++d) {
    out[d].lo = std::max(a[d].lo, b[d].lo);
    out[d].hi = std::min(a[d].hi, b[d].hi);
    if (out[d].lo > out[d].hi) return std::nullopt;
  }
  return out;
}

bool boxes_overlap(const Box& a, const Box& b) {
  if (a.dims() != b.dims()) return false;
  for (std::size_t d = 0; d < a.dims(); ++d)
    if (a[d].hi < b[d].lo || b[d].hi < a[d].lo) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Schema

void ArraySchema::validate() const {
  if (dims.empty()) fail(Errc::schema, "array '" + name + "' has no dimensions");
  if (dims.size() > kMaxDims) fail(Errc::schema, "array '" + name + "' has more than 8 dimensions");
  std::unordered_set<std::string> names;
  for (const auto& d : dims) {
    if (d.lo > d.hi) fail(Errc::schema, "dimension '" + d.name + "' has lo > hi");
    if (!names.insert(d.name).second) fail(Errc::schema, "duplicate name '" + d.name + "'");
  }
  for (const auto& a : attrs)
    if (!names.insert(a.name).second) fail(Errc::schema, "duplicate name '" + a.name + "'");
  if (!origin.empty() && origin.size() != dims.size())
    fail(Errc::schema, "origin of '" + name + "' must have one entry per dimension");
}

Box ArraySchema::box() const {
  std::vector<Range> r;
  r.reserve(dims.size());
  for (const auto& d : dims) r.push_back({d.lo, d.hi});
  return Box(r);
}

std::optional<std::size_t> ArraySchema::dim_index(std::string_view dim) const {
  for (std::size_t i = 0; i < dims.size(); ++i)
    if (dims[i].name == dim) return i;
  return std::nullopt;
}

std::optional<std::size_t> ArraySchema::attr_index(std::string_view attr) const {
  for (std::size_t i = 0; i < attrs.size(); ++i)
    if (attrs[i].name == attr) return i;
  return std::nullopt;
}

std::size_t ArraySchema::require_attr(std::string_view attr) const {
  if (auto i = attr_index(attr)) return *i;
  fail(Errc::schema, "array '" + name + "' has no attribute '" + std::string(attr) + "'");
}

std::size_t ArraySchema::require_dim(std::string_view dim) const {
  if (auto i = dim_index(dim)) return *i;
  fail(Errc::schema, "array '" + name + "' has no dimension '" + std::string(dim) + "'");
}

// ---------------------------------------------------------------------------
// Columns / bitmap / zones

AttrKind column_kind(const Column& c) {
  return c.index() == 0 ? AttrKind::int64 : AttrKind::float64;
}

std::size_t column_size(const Column& c) {
  return std::visit([](const auto& v) { return v.size(); }, c);
}

CellValue column_get(const Column& c, std::size_t i) {
  if (c.index() == 0) return CellValue(std::get<0>(c)[i]);
  return CellValue(std::get<1>(c)[i]);
}

Column make_column(AttrKind kind, std::size_t n) {
  if (kind == AttrKind::int64) return std::vector<std::int64_t>(n, 0);
  return std::vector<double>(n, 0.0);
}

Bitmap::Bitmap(std::size_t n, bool value) : words_((n + 63) / 64, value ? ~std::uint64_t{0} : 0), size_(n) {
  if (value && (n & 63)) words_.back() = (std::uint64_t{1} << (n & 63)) - 1;
}

std::size_t Bitmap::count() const {
  std::size_t c = 0;
  for (auto w : words_) c += static_cast<std::size_t>(std::popcount(w));
  return c;
}

bool ZoneRange::overlaps(const CellValue& lo, const CellValue& hi) const {
  if (empty()) return false;
  return !(max < lo) && !(hi < min);
}

ZoneRange ZoneRange::empty_of(AttrKind kind) {
  if (kind == AttrKind::int64)
    return {CellValue(std::numeric_limits<std::int64_t>::max()),
            CellValue(-std::numeric_limits<std::int64_t>::max())};
  return {CellValue(std::numeric_limits<double>::max()), CellValue(-std::numeric_limits<double>::max())};
}

// ---------------------------------------------------------------------------
// Chunk

std::size_t Chunk::rows() const {
  if (dense()) return static_cast<std::size_t>(box.volume());
  return dim_offsets.empty() ? 0 : dim_offsets.front()->size();
}

std::size_t Chunk::valid_count() const { return dense() ? validity.count() : rows(); }

Coord Chunk::coords(std::size_t row) const {
  if (dense()) return coords_in(box, row);
  Coord c(box.dims());
  for (std::size_t d = 0; d < box.dims(); ++d) c[d] = box[d].lo + (*dim_offsets[d])[row];
  return c;
}

std::int64_t Chunk::coord(std::size_t row, std::size_t d) const {
  if (!dense()) return box[d].lo + (*dim_offsets[d])[row];
  std::uint64_t rest = row;
  for (std::size_t k = box.dims(); k-- > d + 1;) rest /= static_cast<std::uint64_t>(box[k].extent());
  return box[d].lo + static_cast<std::int64_t>(rest % static_cast<std::uint64_t>(box[d].extent()));
}

std::optional<std::size_t> Chunk::attr_index(std::string_view name) const {
  for (std::size_t i = 0; i < attrs.size(); ++i)
    if (attrs[i].name == name) return i;
  return std::nullopt;
}

std::uint64_t Chunk::payload_bytes() const {
  return static_cast<std::uint64_t>(rows()) * 8u * columns.size();
}

namespace {

template <typename T>
ZoneRange zone_of(const std::vector<T>& v, const Chunk& c) {
  bool any = false;
  T lo{}, hi{};
  auto visit = [&](std::size_t i) {
    if (!any) {
      lo = hi = v[i];
      any = true;
    } else {
      lo = std::min(lo, v[i]);
      hi = std::max(hi, v[i]);
    }
  };
  if (c.dense()) {
    c.validity.for_each_set(visit);
  } else {
    for (std::size_t i = 0; i < v.size(); ++i) visit(i);
  }
  if (!any) return ZoneRange::empty_of(std::is_same_v<T, double> ? AttrKind::float64 : AttrKind::int64);
  return {CellValue(lo), CellValue(hi)};
}

}  // namespace

void compute_zones(Chunk& c) {
  c.attr_zone.clear();
  for (const auto& col : c.columns)
    c.attr_zone.push_back(std::visit([&](const auto& v) { return zone_of(v, c); }, *col));
  c.dim_zone.clear();
  for (std::size_t d = 0; d < c.box.dims(); ++d) {
    if (c.dense()) {
      c.dim_zone.push_back({CellValue(c.box[d].lo), CellValue(c.box[d].hi)});
      continue;
    }
    const auto& off = *c.dim_offsets[d];
    if (off.empty()) {
      c.dim_zone.push_back(ZoneRange::empty_of(AttrKind::int64));
      continue;
    }
    auto [mn, mx] = std::minmax_element(off.begin(), off.end());
    c.dim_zone.push_back({CellValue(c.box[d].lo + *mn), CellValue(c.box[d].lo + *mx)});
  }
}

Chunk make_dense_chunk(const ArraySchema& schema, std::int64_t id, const Box& box, std::vector<Column> values,
                       Bitmap validity) {
  if (box.dims() != schema.dims.size()) fail(Errc::domain, "chunk box dimensionality mismatch");
  if (!schema.box().contains(box))
    fail(Errc::domain, "chunk box " + box.to_string() + " outside array " + schema.box().to_string());
  if (values.size() != schema.attrs.size()) fail(Errc::schema, "expected one column per attribute");
  std::vector<ColumnPtr> cols;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (column_kind(values[i]) != schema.attrs[i].kind)
      fail(Errc::schema, "column kind mismatch for '" + schema.attrs[i].name + "'");
    cols.push_back(std::make_shared<const Column>(std::move(values[i])));
  }
  return make_dense_chunk(id, box, schema.attrs, std::move(cols), std::move(validity));
}

Chunk make_dense_chunk(std::int64_t id, const Box& box, std::vector<AttributeSpec> attrs,
                       std::vector<ColumnPtr> values, Bitmap validity) {
  const std::uint64_t cells = box.volume();
  if (attrs.size() != values.size()) fail(Errc::schema, "attribute/column count mismatch");
  for (const auto& v : values)
    if (column_size(*v) != cells)
      fail(Errc::schema, "column length " + std::to_string(column_size(*v)) + " != cell count " +
                             std::to_string(cells));
  if (validity.size() != cells) fail(Errc::schema, "validity length does not match cell count");
  Chunk c;
  c.id = id;
  c.box = box;
  c.layout = Layout::dense_suppressed;
  c.validity = std::move(validity);
  c.attrs = std::move(attrs);
  c.columns = std::move(values);
  compute_zones(c);
  return c;
}

Chunk make_sparse_chunk(std::int64_t id, const Box& box, std::vector<AttributeSpec> attrs,
                        const std::vector<std::vector<std::int64_t>>& coords, std::vector<ColumnPtr> values) {
  if (coords.size() != box.dims()) fail(Errc::schema, "expected one coordinate column per dimension");
  const std::size_t n = coords.empty() ? 0 : coords.front().size();
  for (const auto& dc : coords)
    if (dc.size() != n) fail(Errc::schema, "coordinate columns differ in length");
  if (attrs.size() != values.size()) fail(Errc::schema, "attribute/column count mismatch");
  for (const auto& v : values)
    if (column_size(*v) != n) fail(Errc::schema, "attribute column length mismatch");
  Chunk c;
  c.id = id;
  c.box = box;
  c.layout = Layout::sparse_explicit;
  c.attrs = std::move(attrs);
  c.columns = std::move(values);
  for (std::size_t d = 0; d < coords.size(); ++d) {
    std::vector<std::int64_t> off(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (!box[d].contains(coords[d][i]))
        fail(Errc::domain, "sparse cell outside chunk box " + box.to_string());
      off[i] = coords[d][i] - box[d].lo;
    }
    c.dim_offsets.push_back(std::make_shared<const std::vector<std::int64_t>>(std::move(off)));
  }
  compute_zones(c);
  return c;
}

std::uint64_t offset_in(const Box& box, const Coord& coords) {
  std::uint64_t off = 0;
  for (std::size_t d = 0; d < box.dims(); ++d)
    off = off * static_cast<std::uint64_t>(box[d].extent()) + static_cast<std::uint64_t>(coords[d] - box[d].lo);
  return off;
}

Coord coords_in(const Box& box, std::uint64_t offset) {
  Coord c(box.dims());
  for (std::size_t d = box.dims(); d-- > 0;) {
    const auto ext = static_cast<std::uint64_t>(box[d].extent());
    c[d] = box[d].lo + static_cast<std::int64_t>(offset % ext);
    offset /= ext;
  }
  return c;
}

Coord cell_coords(const Chunk& chunk, std::uint64_t offset) {
  if (!chunk.dense()) fail(Errc::layout, "cell_coords requires a dense-suppressed chunk");
  if (offset >= chunk.box.volume())
    fail(Errc::domain, "offset " + std::to_string(offset) + " outside chunk " + chunk.box.to_string());
  return coords_in(chunk.box, offset);
}

std::uint64_t cell_offset(const Chunk& chunk, const Coord& coords) {
  if (!chunk.dense()) fail(Errc::layout, "cell_offset requires a dense-suppressed chunk");
  if (!chunk.box.contains(coords)) fail(Errc::domain, "coordinates outside chunk " + chunk.box.to_string());
  return offset_in(chunk.box, coords);
}

Chunk to_sparse(const Chunk& chunk) {
  if (!chunk.dense()) return chunk;
  const std::size_t nd = chunk.dims();
  std::vector<std::vector<std::int64_t>> coords(nd);
  std::vector<std::size_t> rows;
  rows.reserve(chunk.valid_count());
  chunk.validity.for_each_set([&](std::size_t r) { rows.push_back(r); });
  for (auto& v : coords) v.reserve(rows.size());
  for (auto r : rows) {
    const Coord c = coords_in(chunk.box, r);
    for (std::size_t d = 0; d < nd; ++d) coords[d].push_back(c[d]);
  }
  std::vector<ColumnPtr> cols;
  for (const auto& col : chunk.columns) {
    cols.push_back(std::make_shared<const Column>(std::visit(
        [&](const auto& v) -> Column {
          std::remove_cvref_t<decltype(v)> out;
          out.reserve(rows.size());
          for (auto r : rows) out.push_back(v[r]);
          return out;
        },
        *col)));
  }
  return make_sparse_chunk(chunk.id, chunk.box, chunk.attrs, coords, std::move(cols));
}

/// Copies the cells of `sub` out of a dense chunk, one contiguous run per row.
Chunk slice_dense(const Chunk& whole, const Box& sub, std::int64_t id) {
  const std::size_t nd = whole.dims();
  const std::size_t cells = sub.volume();
  const std::int64_t run = sub[nd - 1].extent();
  Box starts = sub;
  starts[nd - 1].hi = starts[nd - 1].lo;
  std::vector<Column> cols;
  for (const auto& col : whole.columns) cols.push_back(make_column(column_kind(*col), cells));
  Bitmap valid(cells);
  for_each_cell(starts, [&](const Coord& c, std::uint64_t row) {
    const std::uint64_t src = offset_in(whole.box, c);
    const std::uint64_t dst = row * static_cast<std::uint64_t>(run);
    for (std::size_t a = 0; a < cols.size(); ++a) {
      std::visit(
          [&](auto& out) {
            const auto& in = std::get<std::remove_cvref_t<decltype(out)>>(*whole.columns[a]);
            std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(src), run,
                        out.begin() + static_cast<std::ptrdiff_t>(dst));
          },
          cols[a]);
    }
    for (std::int64_t k = 0; k < run; ++k)
      if (whole.validity.get(src + static_cast<std::uint64_t>(k))) valid.set(dst + static_cast<std::uint64_t>(k));
  });
  std::vector<ColumnPtr> ptrs;
  for (auto& c : cols) ptrs.push_back(std::make_shared<const Column>(std::move(c)));
  return make_dense_chunk(id, sub, whole.attrs, std::move(ptrs), std::move(valid));
}

Column gather(const Column& col, std::span<const std::size_t> rows) {
  return std::visit(
      [&](const auto& v) -> Column {
        std::remove_cvref_t<decltype(v)> out;
        out.reserve(rows.size());
        for (auto r : rows) out.push_back(v[r]);
        return out;
      },
      col);
}

Chunk take_rows(const Chunk& src, std::span<const std::size_t> rows, std::int64_t id, const std::optional<Box>& box) {
  if (src.dense()) fail(Errc::layout, "take_rows requires a sparse chunk");
  const std::size_t nd = src.dims();
  Box out_box = src.box;
  if (box) {
    out_box = *box;
  } else if (!rows.empty()) {
    for (std::size_t d = 0; d < nd; ++d) {
      const auto& off = *src.dim_offsets[d];
      std::int64_t lo = std::numeric_limits<std::int64_t>::max();
      std::int64_t hi = std::numeric_limits<std::int64_t>::min();
      for (auto r : rows) {
        lo = std::min(lo, off[r]);
        hi = std::max(hi, off[r]);
      }
      out_box[d] = {src.box[d].lo + lo, src.box[d].lo + hi};
    }
  }
  Chunk c;
  c.id = id;
  c.box = out_box;
  c.layout = Layout::sparse_explicit;
  c.attrs = src.attrs;
  for (const auto& col : src.columns) c.columns.push_back(std::make_shared<const Column>(gather(*col, rows)));
  for (std::size_t d = 0; d < nd; ++d) {
    const auto& off = *src.dim_offsets[d];
    const std::int64_t delta = src.box[d].lo - out_box[d].lo;
    std::vector<std::int64_t> v;
    v.reserve(rows.size());
    for (auto r : rows) {
      const std::int64_t o = off[r] + delta;
      if (o < 0 || o >= out_box[d].extent()) fail(Errc::domain, "row outside target box " + out_box.to_string());
      v.push_back(o);
    }
    c.dim_offsets.push_back(std::make_shared<const std::vector<std::int64_t>>(std::move(v)));
  }
  compute_zones(c);
  return c;
}

std::size_t Array::valid_cells() const {
  std::size_t n = 0;
  for (const auto& c : chunks) n += c->valid_count();
  return n;
}

}  // namespace aql
