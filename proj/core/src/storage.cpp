#include "aql/storage.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include "aql/bytes.hpp"

namespace aql {

namespace {

constexpr char kMagic[4] = {'A', 'Q', 'L', 'C'};

void put_value(ByteWriter& w, const CellValue& v, AttrKind kind) {
  if (kind == AttrKind::int64)
    w.put<std::int64_t>(v.as_int());
  else
    w.put<double>(v.as_double());
}

CellValue get_value(ByteReader& r, AttrKind kind) {
  if (kind == AttrKind::int64) return CellValue(r.get<std::int64_t>());
  return CellValue(r.get<double>());
}

const void* column_data(const Column& c) {
  return std::visit([](const auto& v) -> const void* { return v.data(); }, c);
}

class FileReader {
 public:
  FileReader(const std::filesystem::path& path, IoStats* stats) : path_(path), stats_(stats) {
    in_.open(path, std::ios::binary);
    if (!in_) fail(Errc::io, "cannot open chunk file " + path.string());
  }

  void read(void* dst, std::size_t n, const std::string& what) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    const auto got = static_cast<std::size_t>(in_.gcount());
    bytes_ += got;
    if (got != n) fail(Errc::format, "truncated " + what + " in " + path_.string());
  }

  template <typename T>
  T get(const std::string& what) {
    T v;
    read(&v, sizeof(T), what);
    return v;
  }

  void skip(std::uint64_t n, const std::string& what) {
    in_.seekg(static_cast<std::streamoff>(n), std::ios::cur);
    if (!in_) fail(Errc::format, "truncated " + what + " in " + path_.string());
  }

  std::uint64_t size() {
    const auto pos = in_.tellg();
    in_.seekg(0, std::ios::end);
    const auto end = in_.tellg();
    in_.seekg(pos);
    return static_cast<std::uint64_t>(end);
  }

  std::uint64_t position() { return static_cast<std::uint64_t>(in_.tellg()); }

  ~FileReader() {
    if (stats_) stats_->bytes_read += bytes_;
  }

 private:
  std::filesystem::path path_;
  IoStats* stats_;
  std::ifstream in_;
  std::uint64_t bytes_ = 0;
};

}  // namespace

std::uint64_t write_chunk(const Chunk& chunk, const std::filesystem::path& path) {
  const std::size_t nd = chunk.dims();
  const std::size_t na = chunk.attrs.size();
  if (chunk.columns.size() != na) fail(Errc::schema, "chunk column count mismatch");
  ByteWriter h;
  h.put_bytes(kMagic, 4);
  h.put<std::uint16_t>(kChunkFormatVersion);
  h.put<std::uint8_t>(static_cast<std::uint8_t>(chunk.layout));
  h.put<std::uint8_t>(static_cast<std::uint8_t>(nd));
  h.put<std::uint16_t>(static_cast<std::uint16_t>(na));
  for (std::size_t d = 0; d < nd; ++d) {
    h.put<std::int64_t>(chunk.box[d].lo);
    h.put<std::int64_t>(chunk.box[d].hi);
  }
  for (std::size_t a = 0; a < na; ++a) {
    const AttrKind k = chunk.attrs[a].kind;
    h.put<std::uint8_t>(static_cast<std::uint8_t>(k));
    const ZoneRange z = a < chunk.attr_zone.size() ? chunk.attr_zone[a] : ZoneRange::empty_of(k);
    put_value(h, z.min, k);
    put_value(h, z.max, k);
  }
  const std::uint64_t rows = chunk.rows();
  if (chunk.dense()) {
    const std::uint64_t nbytes = (rows + 7) / 8;
    h.put<std::uint64_t>(nbytes);
    h.put_bytes(chunk.validity.words().data(), nbytes);
  }
  h.put<std::uint64_t>(rows);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::io, "cannot create chunk file " + path.string());
  out.write(reinterpret_cast<const char*>(h.bytes().data()), static_cast<std::streamsize>(h.size()));
  std::uint64_t total = h.size();
  auto block = [&](const void* data, std::uint64_t n) {
    out.write(reinterpret_cast<const char*>(&n), sizeof n);
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    total += sizeof n + n;
  };
  if (!chunk.dense())
    for (std::size_t d = 0; d < nd; ++d) block(chunk.dim_offsets[d]->data(), rows * 8);
  for (std::size_t a = 0; a < na; ++a) {
    if (column_size(*chunk.columns[a]) != rows) fail(Errc::schema, "column length mismatch");
    block(column_data(*chunk.columns[a]), rows * 8);
  }
  out.flush();
  if (!out) fail(Errc::io, "write failed for chunk file " + path.string());
  return total;
}

Chunk read_chunk(const std::filesystem::path& path, std::span<const AttributeSpec> attrs,
                 const std::optional<std::vector<std::string>>& columns, IoStats* stats, std::int64_t chunk_id,
                 std::span<const DimensionSpec> dims) {
  std::vector<bool> wanted(attrs.size(), !columns.has_value());
  if (columns) {
    for (const auto& name : *columns) {
      auto it = std::find_if(attrs.begin(), attrs.end(), [&](const auto& a) { return a.name == name; });
      if (it != attrs.end()) {
        wanted[static_cast<std::size_t>(it - attrs.begin())] = true;
        continue;
      }
      const bool is_dim = std::any_of(dims.begin(), dims.end(), [&](const auto& d) { return d.name == name; });
      if (!is_dim) fail(Errc::schema, "unknown column '" + name + "' requested from " + path.string());
    }
  }

  FileReader in(path, stats);
  char magic[4];
  in.read(magic, 4, "header");
  if (std::memcmp(magic, kMagic, 4) != 0) fail(Errc::format, "bad chunk magic in " + path.string());
  const auto version = in.get<std::uint16_t>("header");
  if (version != kChunkFormatVersion) fail(Errc::format, "unsupported chunk format version " + std::to_string(version));
  const auto layout = in.get<std::uint8_t>("header");
  if (layout > 1) fail(Errc::format, "bad layout flag in " + path.string());
  const auto nd = in.get<std::uint8_t>("header");
  const auto na = in.get<std::uint16_t>("header");
  if (nd == 0 || nd > kMaxDims) fail(Errc::format, "bad dimension count in " + path.string());
  if (na != attrs.size())
    fail(Errc::schema, path.string() + " stores " + std::to_string(na) + " attributes, expected " +
                           std::to_string(attrs.size()));

  Chunk c;
  c.id = chunk_id;
  c.layout = static_cast<Layout>(layout);
  std::vector<Range> ranges(nd);
  for (auto& r : ranges) {
    r.lo = in.get<std::int64_t>("box");
    r.hi = in.get<std::int64_t>("box");
    if (r.lo > r.hi) fail(Errc::format, "inverted box in " + path.string());
  }
  c.box = Box(std::span<const Range>(ranges));
  std::vector<ZoneRange> zones(na);
  for (std::size_t a = 0; a < na; ++a) {
    const auto k = in.get<std::uint8_t>("attribute header");
    if (k > 1) fail(Errc::format, "bad attribute kind in " + path.string());
    if (static_cast<AttrKind>(k) != attrs[a].kind)
      fail(Errc::schema, "attribute '" + attrs[a].name + "' kind mismatch in " + path.string());
    const std::size_t w = 8;
    std::uint8_t raw[16];
    in.read(raw, 2 * w, "attribute header");
    ByteReader br(std::span<const std::uint8_t>(raw, 16));
    zones[a].min = get_value(br, attrs[a].kind);
    zones[a].max = get_value(br, attrs[a].kind);
  }
  if (c.dense()) {
    const auto nbytes = in.get<std::uint64_t>("validity");
    const std::uint64_t cells = c.box.volume();
    if (nbytes != (cells + 7) / 8) fail(Errc::format, "validity length mismatch in " + path.string());
    c.validity = Bitmap(cells);
    in.read(c.validity.words().data(), nbytes, "validity");
    if (cells & 63) c.validity.words().back() &= (std::uint64_t{1} << (cells & 63)) - 1;
  }
  const auto rows = in.get<std::uint64_t>("row count");
  if (c.dense() && rows != c.box.volume()) fail(Errc::format, "row count mismatch in " + path.string());
  if (rows > in.size()) fail(Errc::format, "implausible row count in " + path.string());

  auto read_block = [&](void* dst, const std::string& what) {
    const auto n = in.get<std::uint64_t>("length of column '" + what + "'");
    if (n != rows * 8) fail(Errc::format, "column '" + what + "' has bad length in " + path.string());
    in.read(dst, n, "column '" + what + "'");
  };
  if (!c.dense()) {
    for (std::size_t d = 0; d < nd; ++d) {
      std::vector<std::int64_t> off(rows);
      const std::string name = d < dims.size() ? dims[d].name : "dim" + std::to_string(d);
      read_block(off.data(), name);
      for (auto o : off)
        if (o < 0 || o >= c.box[d].extent()) fail(Errc::format, "coordinate outside box in " + path.string());
      c.dim_offsets.push_back(std::make_shared<const std::vector<std::int64_t>>(std::move(off)));
    }
  }
  for (std::size_t a = 0; a < na; ++a) {
    if (!wanted[a]) {
      const auto n = in.get<std::uint64_t>("length of column '" + attrs[a].name + "'");
      in.skip(n, "column '" + attrs[a].name + "'");
      continue;
    }
    Column col = make_column(attrs[a].kind, rows);
    void* dst = std::visit([](auto& v) -> void* { return v.data(); }, col);
    read_block(dst, attrs[a].name);
    c.attrs.push_back(attrs[a]);
    c.columns.push_back(std::make_shared<const Column>(std::move(col)));
    c.attr_zone.push_back(zones[a]);
  }
  // Dimension zones are derived, not stored.
  std::vector<ZoneRange> attr_zone = std::move(c.attr_zone);
  compute_zones(c);
  c.attr_zone = std::move(attr_zone);
  if (stats) ++stats->chunks_read;
  return c;
}

bool same_chunk(const Chunk& a, const Chunk& b) {
  if (!(a.box == b.box) || a.layout != b.layout || !(a.attrs == b.attrs) || a.rows() != b.rows()) return false;
  if (a.dense() && !(a.validity == b.validity)) return false;
  if (a.columns.size() != b.columns.size()) return false;
  for (std::size_t i = 0; i < a.columns.size(); ++i)
    if (!(*a.columns[i] == *b.columns[i])) return false;
  if (!a.dense()) {
    for (std::size_t d = 0; d < a.dims(); ++d)
      if (!(*a.dim_offsets[d] == *b.dim_offsets[d])) return false;
  }
  return a.attr_zone == b.attr_zone && a.dim_zone == b.dim_zone;
}

// ---------------------------------------------------------------------------
// Chunking

namespace {

void check_shape(const Box& box, std::span<const std::int64_t> shape) {
  if (shape.size() != box.dims()) fail(Errc::config, "chunk shape dimensionality mismatch");
  for (auto s : shape)
    if (s <= 0) fail(Errc::config, "chunk shape extents must be positive");
}

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

}  // namespace

std::uint64_t regular_chunk_count(const Box& box, std::span<const std::int64_t> shape) {
  check_shape(box, shape);
  std::uint64_t n = 1;
  for (std::size_t d = 0; d < box.dims(); ++d) n *= static_cast<std::uint64_t>(ceil_div(box[d].extent(), shape[d]));
  return n;
}

std::vector<Box> regular_chunk_boxes(const Box& box, std::span<const std::int64_t> shape) {
  check_shape(box, shape);
  const std::size_t nd = box.dims();
  std::vector<Range> grid(nd);
  for (std::size_t d = 0; d < nd; ++d) grid[d] = {0, ceil_div(box[d].extent(), shape[d]) - 1};
  std::vector<Box> out;
  out.reserve(regular_chunk_count(box, shape));
  for_each_cell(Box(std::span<const Range>(grid)), [&](const Coord& g, std::uint64_t) {
    Box b = box;
    for (std::size_t d = 0; d < nd; ++d) {
      b[d].lo = box[d].lo + g[d] * shape[d];
      b[d].hi = std::min(box[d].hi, b[d].lo + shape[d] - 1);
    }
    out.push_back(b);
  });
  return out;
}

namespace {

void split_irregular(const Chunk& whole, std::vector<std::size_t>& rows, std::size_t lo, std::size_t hi,
                     std::uint64_t target, std::vector<std::vector<std::size_t>>& parts) {
  const std::size_t n = hi - lo;
  if (n <= target) {
    parts.emplace_back(rows.begin() + static_cast<std::ptrdiff_t>(lo), rows.begin() + static_cast<std::ptrdiff_t>(hi));
    return;
  }
  // Widest dimension of the rows' bounding box.
  std::size_t best = 0;
  std::int64_t best_span = -1;
  for (std::size_t d = 0; d < whole.dims(); ++d) {
    const auto& off = *whole.dim_offsets[d];
    std::int64_t mn = std::numeric_limits<std::int64_t>::max(), mx = std::numeric_limits<std::int64_t>::min();
    for (std::size_t i = lo; i < hi; ++i) {
      mn = std::min(mn, off[rows[i]]);
      mx = std::max(mx, off[rows[i]]);
    }
    if (mx - mn > best_span) best_span = mx - mn, best = d;
  }
  const auto& off = *whole.dim_offsets[best];
  const std::size_t mid = lo + n / 2;
  std::nth_element(rows.begin() + static_cast<std::ptrdiff_t>(lo), rows.begin() + static_cast<std::ptrdiff_t>(mid),
                   rows.begin() + static_cast<std::ptrdiff_t>(hi), [&](std::size_t a, std::size_t b) {
                     return off[a] != off[b] ? off[a] < off[b] : a < b;
                   });
  split_irregular(whole, rows, lo, mid, target, parts);
  split_irregular(whole, rows, mid, hi, target, parts);
}

}  // namespace

std::vector<Chunk> chunk_array(const ArraySchema& schema, const Chunk& whole, const ChunkingStrategy& strategy,
                               std::int64_t first_id) {
  if (whole.dims() != schema.dims.size()) fail(Errc::schema, "chunk dimensionality does not match schema");
  std::vector<Chunk> out;
  if (whole.dense()) {
    if (strategy.kind != ChunkingStrategy::Kind::regular)
      fail(Errc::config, "dense arrays require regular chunking");
    for (const Box& b : regular_chunk_boxes(whole.box, strategy.shape))
      out.push_back(slice_dense(whole, b, first_id + static_cast<std::int64_t>(out.size())));
    return out;
  }
  const std::size_t n = whole.rows();
  if (strategy.kind == ChunkingStrategy::Kind::regular) {
    check_shape(whole.box, strategy.shape);
    const Box& base = schema.box();
    std::map<Coord, std::vector<std::size_t>> buckets;
    for (std::size_t r = 0; r < n; ++r) {
      Coord g(whole.dims());
      for (std::size_t d = 0; d < whole.dims(); ++d)
        g[d] = (whole.coord(r, d) - base[d].lo) / strategy.shape[d];
      buckets[g].push_back(r);
    }
    for (const auto& [g, rows] : buckets)
      out.push_back(take_rows(whole, rows, first_id + static_cast<std::int64_t>(out.size())));
    return out;
  }
  if (strategy.target_cells == 0) fail(Errc::config, "irregular chunking needs a positive target");
  if (n == 0) return out;
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  std::vector<std::vector<std::size_t>> parts;
  split_irregular(whole, rows, 0, n, strategy.target_cells, parts);
  for (auto& p : parts) {
    std::sort(p.begin(), p.end());
    out.push_back(take_rows(whole, p, first_id + static_cast<std::int64_t>(out.size())));
  }
  return out;
}

std::vector<int> place_chunks(std::span<const std::int64_t> chunk_ids, int n_workers, PlacementPolicy policy,
                              std::uint64_t seed) {
  if (n_workers <= 0) fail(Errc::config, "worker count must be positive");
  std::vector<int> out;
  out.reserve(chunk_ids.size());
  if (policy == PlacementPolicy::round_robin) {
    for (auto id : chunk_ids) out.push_back(static_cast<int>(((id % n_workers) + n_workers) % n_workers));
    return out;
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, n_workers - 1);
  for (std::size_t i = 0; i < chunk_ids.size(); ++i) out.push_back(pick(rng));
  return out;
}

}  // namespace aql
