#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

#include "aql/storage.hpp"

namespace aql {

namespace {

std::string format_value(const CellValue& v) {
  if (v.is_int()) return std::to_string(v.as_int());
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v.as_double());
  return buf;
}

CellValue parse_value(const std::string& tok, AttrKind kind, const std::filesystem::path& path) {
  char* end = nullptr;
  if (kind == AttrKind::int64) {
    const long long v = std::strtoll(tok.c_str(), &end, 10);
    if (end != tok.c_str() + tok.size()) fail(Errc::format, "bad integer '" + tok + "' in " + path.string());
    return CellValue(static_cast<std::int64_t>(v));
  }
  const double v = std::strtod(tok.c_str(), &end);
  if (end != tok.c_str() + tok.size()) fail(Errc::format, "bad number '" + tok + "' in " + path.string());
  return CellValue(v);
}

}  // namespace

const ChunkEntry& CatalogEntry::chunk(std::int64_t id) const {
  auto it = std::lower_bound(chunks.begin(), chunks.end(), id, [](const ChunkEntry& c, std::int64_t v) { return c.id < v; });
  if (it == chunks.end() || it->id != id)
    fail(Errc::catalog, "array '" + schema.name + "' has no chunk " + std::to_string(id));
  return *it;
}

std::vector<std::int64_t> CatalogEntry::chunk_ids() const {
  std::vector<std::int64_t> ids;
  ids.reserve(chunks.size());
  for (const auto& c : chunks) ids.push_back(c.id);
  return ids;
}

void write_manifest(const CatalogEntry& e, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(Errc::io, "cannot write manifest " + path.string());
  const auto& s = e.schema;
  out << "array " << s.name << "\n";
  out << "density " << (s.density == Density::dense ? "dense" : "sparse") << "\n";
  out << "workers " << e.n_workers << "\n";
  for (const auto& d : s.dims) out << "dim " << d.name << " " << d.lo << " " << d.hi << "\n";
  for (const auto& a : s.attrs) out << "attr " << a.name << " " << to_string(a.kind) << "\n";
  if (!s.origin.empty()) {
    out << "origin";
    for (auto v : s.origin) out << " " << v;
    out << "\n";
  }
  for (const auto& c : e.chunks) {
    out << "chunk " << c.id << " " << c.worker << " " << c.file << " " << c.rows;
    for (std::size_t d = 0; d < c.box.dims(); ++d) out << " " << c.box[d].lo << " " << c.box[d].hi;
    for (const auto& z : c.dim_zone) out << " " << format_value(z.min) << " " << format_value(z.max);
    for (const auto& z : c.attr_zone) out << " " << format_value(z.min) << " " << format_value(z.max);
    out << "\n";
  }
  if (!out) fail(Errc::io, "failed writing manifest " + path.string());
}

CatalogEntry read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::catalog, "missing manifest " + path.string());
  CatalogEntry e;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    auto bad = [&] { fail(Errc::format, path.string() + ":" + std::to_string(lineno) + ": malformed '" + tag + "' record"); };
    if (tag == "array") {
      ls >> e.schema.name;
    } else if (tag == "density") {
      std::string d;
      ls >> d;
      if (d != "dense" && d != "sparse") bad();
      e.schema.density = d == "dense" ? Density::dense : Density::sparse;
    } else if (tag == "workers") {
      ls >> e.n_workers;
    } else if (tag == "dim") {
      DimensionSpec d;
      ls >> d.name >> d.lo >> d.hi;
      e.schema.dims.push_back(d);
    } else if (tag == "attr") {
      AttributeSpec a;
      std::string kind;
      ls >> a.name >> kind;
      a.kind = parse_attr_kind(kind);
      e.schema.attrs.push_back(a);
    } else if (tag == "origin") {
      std::int64_t v;
      while (ls >> v) e.schema.origin.push_back(v);
    } else if (tag == "chunk") {
      ChunkEntry c;
      ls >> c.id >> c.worker >> c.file >> c.rows;
      const std::size_t nd = e.schema.dims.size();
      std::vector<Range> ranges(nd);
      for (auto& r : ranges) ls >> r.lo >> r.hi;
      if (!ls) bad();
      c.box = Box(std::span<const Range>(ranges));
      std::string lo, hi;
      for (std::size_t d = 0; d < nd; ++d) {
        if (!(ls >> lo >> hi)) bad();
        c.dim_zone.push_back({parse_value(lo, AttrKind::int64, path), parse_value(hi, AttrKind::int64, path)});
      }
      for (const auto& a : e.schema.attrs) {
        if (!(ls >> lo >> hi)) bad();
        c.attr_zone.push_back({parse_value(lo, a.kind, path), parse_value(hi, a.kind, path)});
      }
      e.chunks.push_back(std::move(c));
    } else {
      fail(Errc::format, path.string() + ":" + std::to_string(lineno) + ": unknown record '" + tag + "'");
    }
    if (ls.fail() && !ls.eof()) bad();
  }
  e.schema.validate();
  std::sort(e.chunks.begin(), e.chunks.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  return e;
}

// ---------------------------------------------------------------------------

Catalog::Catalog(std::filesystem::path root) : root_(std::move(root)) { std::filesystem::create_directories(root_); }

void Catalog::create_array(const ArraySchema& schema, int n_workers) {
  schema.validate();
  if (n_workers <= 0) fail(Errc::config, "worker count must be positive");
  const auto dir = root_ / schema.name;
  std::error_code ec;
  std::filesystem::remove_all(dir, ec);
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(Errc::io, "cannot create " + dir.string() + ": " + ec.message());
  std::lock_guard lock(mu_);
  CatalogEntry e;
  e.schema = schema;
  e.n_workers = n_workers;
  entries_[schema.name] = std::move(e);
}

CatalogEntry& Catalog::mutable_entry(const std::string& array) {
  auto it = entries_.find(array);
  if (it == entries_.end()) fail(Errc::catalog, "array '" + array + "' was not created");
  return it->second;
}

void Catalog::put_chunk(const std::string& array, const Chunk& chunk, int worker) {
  ChunkEntry c;
  c.id = chunk.id;
  c.worker = worker;
  c.file = std::to_string(chunk.id) + ".chk";
  c.rows = chunk.rows();
  c.box = chunk.box;
  c.dim_zone = chunk.dim_zone;
  c.attr_zone = chunk.attr_zone;
  {
    std::lock_guard lock(mu_);
    const auto& e = mutable_entry(array);
    if (!(chunk.attrs == e.schema.attrs)) fail(Errc::schema, "chunk attributes do not match array '" + array + "'");
    if (chunk.dims() != e.schema.dims.size()) fail(Errc::schema, "chunk dimensionality mismatch for '" + array + "'");
  }
  const auto bytes = write_chunk(chunk, root_ / array / c.file);
  io_.bytes_written += bytes;
  ++io_.chunks_written;
  std::lock_guard lock(mu_);
  mutable_entry(array).chunks.push_back(std::move(c));
}

void Catalog::commit(const std::string& array) {
  std::lock_guard lock(mu_);
  auto& e = mutable_entry(array);
  std::sort(e.chunks.begin(), e.chunks.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < e.chunks.size(); ++i)
    if (e.chunks[i].id == e.chunks[i - 1].id)
      fail(Errc::catalog, "duplicate chunk id " + std::to_string(e.chunks[i].id) + " in '" + array + "'");
  write_manifest(e, root_ / array / "manifest.txt");
}

bool Catalog::has(const std::string& array) const {
  std::lock_guard lock(mu_);
  return entries_.count(array) || std::filesystem::exists(root_ / array / "manifest.txt");
}

const CatalogEntry& Catalog::entry(const std::string& array) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find(array);
  if (it != entries_.end()) return it->second;
  const auto path = root_ / array / "manifest.txt";
  if (!std::filesystem::exists(path)) fail(Errc::catalog, "unknown array '" + array + "'");
  return entries_.emplace(array, read_manifest(path)).first->second;
}

std::vector<std::string> Catalog::arrays() const {
  std::vector<std::string> out;
  std::error_code ec;
  for (const auto& d : std::filesystem::directory_iterator(root_, ec))
    if (std::filesystem::exists(d.path() / "manifest.txt")) out.push_back(d.path().filename().string());
  std::sort(out.begin(), out.end());
  return out;
}

std::filesystem::path Catalog::chunk_path(const std::string& array, const ChunkEntry& chunk) const {
  return root_ / array / chunk.file;
}

ChunkPtr Catalog::read(const std::string& array, const ChunkEntry& chunk,
                       const std::optional<std::vector<std::string>>& columns) const {
  const auto& e = entry(array);
  return std::make_shared<const Chunk>(
      read_chunk(chunk_path(array, chunk), e.schema.attrs, columns, &io_, chunk.id, e.schema.dims));
}

// ---------------------------------------------------------------------------

std::vector<std::int64_t> prune(const CatalogEntry& entry, const Box& range, std::span<const AttrRange> predicates) {
  const auto& schema = entry.schema;
  if (range.dims() != schema.dims.size()) fail(Errc::domain, "range dimensionality does not match schema");
  std::vector<std::pair<std::size_t, const AttrRange*>> preds;
  for (const auto& p : predicates) preds.emplace_back(schema.require_attr(p.attr), &p);
  std::vector<std::int64_t> out;
  for (const auto& c : entry.chunks) {
    if (!boxes_overlap(c.box, range)) continue;
    bool keep = true;
    for (std::size_t d = 0; d < c.dim_zone.size() && keep; ++d)
      keep = c.dim_zone[d].overlaps(CellValue(range[d].lo), CellValue(range[d].hi));
    for (const auto& [a, p] : preds) {
      if (!keep) break;
      keep = c.attr_zone[a].overlaps(p->lo, p->hi);
    }
    if (keep) out.push_back(c.id);
  }
  return out;
}

ScanStats scan(const Catalog& catalog, const std::string& array, std::span<const std::int64_t> chunk_ids,
               const ChunkSink& sink, const ScanOptions& options) {
  const auto& e = catalog.entry(array);
  const int n_workers = options.n_workers.value_or(e.n_workers);
  if (n_workers <= 0) fail(Errc::config, "worker count must be positive");
  const std::size_t inflight = std::max<std::size_t>(1, options.max_inflight);

  std::vector<std::vector<const ChunkEntry*>> per_worker(static_cast<std::size_t>(n_workers));
  for (auto id : chunk_ids) {
    const auto& c = e.chunk(id);
    per_worker[static_cast<std::size_t>(c.worker % n_workers)].push_back(&c);
  }

  struct WorkerState {
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> active{0};
    std::atomic<std::size_t> peak{0};
  };
  std::vector<WorkerState> state(static_cast<std::size_t>(n_workers));
  std::atomic<bool> abort{false};
  std::atomic<std::uint64_t> delivered{0};
  std::mutex err_mu;
  std::exception_ptr error;

  auto reader = [&](std::size_t w) {
    auto& st = state[w];
    const auto& mine = per_worker[w];
    while (!abort.load()) {
      const std::size_t i = st.next.fetch_add(1);
      if (i >= mine.size()) return;
      const std::size_t now = st.active.fetch_add(1) + 1;
      std::size_t prev = st.peak.load();
      while (now > prev && !st.peak.compare_exchange_weak(prev, now)) {
      }
      try {
        ChunkPtr chunk = catalog.read(array, *mine[i], options.columns);
        sink(chunk, static_cast<int>(w));
        ++delivered;
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!error) error = std::current_exception();
        abort = true;
      }
      st.active.fetch_sub(1);
    }
  };

  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < per_worker.size(); ++w) {
    const std::size_t k = std::min(inflight, per_worker[w].size());
    for (std::size_t t = 0; t < k; ++t) threads.emplace_back(reader, w);
  }
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);

  ScanStats stats;
  stats.delivered = delivered;
  for (const auto& st : state) stats.peak_inflight = std::max(stats.peak_inflight, st.peak.load());
  return stats;
}

Array load_array(const Catalog& catalog, const std::string& array, const std::optional<Box>& range,
                 std::span<const AttrRange> predicates, const ScanOptions& options) {
  const auto& e = catalog.entry(array);
  const auto ids = prune(e, range.value_or(e.schema.box()), predicates);
  std::vector<std::pair<ChunkPtr, int>> got;
  std::mutex mu;
  scan(catalog, array, ids, [&](const ChunkPtr& c, int w) {
    std::lock_guard lock(mu);
    got.emplace_back(c, w);
  }, options);
  std::sort(got.begin(), got.end(), [](const auto& a, const auto& b) { return a.first->id < b.first->id; });
  Array out;
  out.schema = e.schema;
  if (options.columns) {
    std::vector<AttributeSpec> kept;
    for (const auto& a : e.schema.attrs)
      if (std::find(options.columns->begin(), options.columns->end(), a.name) != options.columns->end())
        kept.push_back(a);
    out.schema.attrs = std::move(kept);
  }
  out.n_workers = options.n_workers.value_or(e.n_workers);
  for (auto& [c, w] : got) {
    out.chunks.push_back(c);
    out.placement.push_back(w);
  }
  return out;
}

}  // namespace aql
