#include "aql/apply_plus.hpp"

#include <unordered_map>
#include <unordered_set>

#include "aql/algebra.hpp"

namespace aql {

NeighborhoodShape NeighborhoodShape::cube(std::size_t dims, std::int64_t radius) {
  return {std::vector<Range>(dims, Range{-radius, radius})};
}

std::string NeighborhoodShape::to_string() const {
  std::string s;
  for (std::size_t d = 0; d < offsets.size(); ++d) {
    if (d) s += "x";
    s += "[" + std::to_string(offsets[d].lo) + "," + std::to_string(offsets[d].hi) + "]";
  }
  return s;
}

namespace {

std::int64_t floor_mod(std::int64_t a, std::int64_t m) {
  const std::int64_t r = a % m;
  return r < 0 ? r + m : r;
}

class PatternDim {
 public:
  PatternDim(const std::string& bits, std::int64_t lo) : bits_(bits), lo_(lo), len_(static_cast<std::int64_t>(bits.size())) {
    if (bits.empty()) fail(Errc::config, "empty bit pattern");
    for (char ch : bits)
      if (ch != '0' && ch != '1') fail(Errc::config, "bit pattern '" + bits + "' must contain only 0 and 1");
    prefix_.assign(bits.size() + 1, 0);
    for (std::size_t i = 0; i < bits.size(); ++i) prefix_[i + 1] = prefix_[i] + (bits[i] == '1');
    ones_ = prefix_.back();
    if (ones_ == 0) fail(Errc::config, "bit pattern '" + bits + "' selects no cell");
    next_.assign(bits.size(), 0);
    for (std::int64_t k = 0; k < len_; ++k) {
      std::int64_t d = 1;
      while (bits_[static_cast<std::size_t>((k + d) % len_)] != '1') ++d;
      next_[static_cast<std::size_t>(k)] = d;
    }
  }

  bool on(std::int64_t x) const { return bits_[static_cast<std::size_t>(floor_mod(x - lo_, len_))] == '1'; }
  /// Origins in [lo, x).
  std::int64_t rank(std::int64_t x) const {
    const std::int64_t rel = x - lo_;
    return (rel / len_) * ones_ + prefix_[static_cast<std::size_t>(rel % len_)];
  }
  std::int64_t next_after(std::int64_t x) const { return x + next_[static_cast<std::size_t>(floor_mod(x - lo_, len_))]; }
  std::vector<std::int64_t> origins_in(const Range& r) const {
    std::vector<std::int64_t> out;
    for (std::int64_t x = std::max(r.lo, lo_); x <= r.hi; ++x)
      if (on(x)) out.push_back(x);
    return out;
  }

 private:
  std::string bits_;
  std::int64_t lo_, len_;
  std::vector<std::int64_t> prefix_;
  std::int64_t ones_ = 0;
  std::vector<std::int64_t> next_;
};

struct Counters {
  std::atomic<std::uint64_t> local{0};
  std::atomic<std::uint64_t> halo{0};
};

struct Cfg {
  std::size_t nd = 0;
  Box array_box;
  std::vector<Range> shape;
  bool pattern = false;
  bool clip = false;
  std::vector<PatternDim> pdims;
  Box out_box;
  std::vector<AggSpec> aggs;
  std::vector<AttrKind> in_kinds;
  std::vector<AttributeSpec> out_attrs;
  bool all_count = true;
  std::vector<ChunkPtr> chunks;
  std::unordered_map<const Chunk*, std::size_t> index_of;
  std::vector<Box> candidates;  // origins whose window may touch chunk i
  std::vector<Box> reach;       // union of those windows
  std::vector<std::vector<std::size_t>> neighbors;
  std::shared_ptr<Counters> counters = std::make_shared<Counters>();

  Box window(const Coord& o) const {
    Box w = array_box;
    for (std::size_t d = 0; d < nd; ++d) {
      w[d].lo = o[d] + shape[d].lo;
      w[d].hi = o[d] + shape[d].hi;
      if (clip) w[d].hi = std::min(w[d].hi, pdims[d].next_after(o[d]) - 1);
    }
    return w;
  }

  std::vector<AggState> fresh() const {
    std::vector<AggState> s;
    s.reserve(aggs.size());
    for (std::size_t i = 0; i < aggs.size(); ++i) s.emplace_back(aggs[i].kind, in_kinds[i], aggs[i].user);
    return s;
  }

  std::uint64_t out_offset(const Coord& o) const {
    std::uint64_t off = 0;
    for (std::size_t d = 0; d < nd; ++d)
      off = off * static_cast<std::uint64_t>(out_box[d].extent()) + static_cast<std::uint64_t>(pdims[d].rank(o[d]));
    return off;
  }
};

/// Window lookups over one chunk's cells.
class View {
 public:
  View(const Chunk& c, const Cfg& cfg) : c_(c) {
    for (const auto& a : cfg.aggs) {
      const std::int64_t* ip = nullptr;
      const double* dp = nullptr;
      if (!a.attr.empty() && a.attr != "*") {
        auto idx = c.attr_index(a.attr);
        if (!idx) fail(Errc::schema, "chunk lacks attribute '" + a.attr + "'");
        std::visit(
            [&](const auto& v) {
              using T = typename std::remove_cvref_t<decltype(v)>::value_type;
              if constexpr (std::is_same_v<T, double>)
                dp = v.data();
              else
                ip = v.data();
            },
            *c.columns[*idx]);
      }
      ip_.push_back(ip);
      dp_.push_back(dp);
    }
    if (!c.dense()) {
      const std::size_t n = c.rows();
      index_.reserve(n);
      for (std::size_t r = 0; r < n; ++r) index_.emplace(c.coords(r), r);
    }
  }

  void add_row(std::vector<AggState>& st, std::size_t r) const {
    for (std::size_t i = 0; i < st.size(); ++i) {
      if (ip_[i])
        st[i].add_int(ip_[i][r]);
      else if (dp_[i])
        st[i].add_double(dp_[i][r]);
      else
        st[i].add_int(0);
    }
  }

  /// Adds the valid cells of `w` held by this chunk; true if any.
  bool gather(const Box& w, std::vector<AggState>& st) const {
    auto sub = box_intersect(w, c_.box);
    if (!sub) return false;
    bool any = false;
    const std::size_t nd = c_.dims();
    if (c_.dense()) {
      const Box& b = c_.box;
      std::uint64_t strides[kMaxDims];
      strides[nd - 1] = 1;
      for (std::size_t d = nd - 1; d-- > 0;) strides[d] = strides[d + 1] * static_cast<std::uint64_t>(b[d + 1].extent());
      Coord x = sub->lower();
      while (true) {
        std::uint64_t base = 0;
        for (std::size_t d = 0; d + 1 < nd; ++d) base += static_cast<std::uint64_t>(x[d] - b[d].lo) * strides[d];
        const std::uint64_t first = base + static_cast<std::uint64_t>((*sub)[nd - 1].lo - b[nd - 1].lo);
        const std::uint64_t last = base + static_cast<std::uint64_t>((*sub)[nd - 1].hi - b[nd - 1].lo);
        for (std::uint64_t off = first; off <= last; ++off) {
          if (c_.validity.get(off)) {
            add_row(st, off);
            any = true;
          }
        }
        // Advance the odometer over all but the last dimension.
        std::size_t d = nd - 1;
        while (d > 0) {
          --d;
          if (x[d] < (*sub)[d].hi) {
            ++x[d];
            break;
          }
          x[d] = (*sub)[d].lo;
          if (d == 0) return any;
        }
        if (nd == 1) return any;
      }
    }
    if (sub->volume() <= 4 * index_.size() + 16) {
      for_each_cell(*sub, [&](const Coord& x, std::uint64_t) {
        auto [lo, hi] = index_.equal_range(x);
        for (auto it = lo; it != hi; ++it) {
          add_row(st, it->second);
          any = true;
        }
      });
    } else {
      const std::size_t n = c_.rows();
      for (std::size_t r = 0; r < n; ++r) {
        bool inside = true;
        for (std::size_t d = 0; d < nd && inside; ++d) inside = (*sub)[d].contains(c_.coord(r, d));
        if (inside) {
          add_row(st, r);
          any = true;
        }
      }
    }
    return any;
  }

 private:
  const Chunk& c_;
  std::vector<const std::int64_t*> ip_;
  std::vector<const double*> dp_;
  std::unordered_multimap<Coord, std::size_t, CoordHash> index_;
};

struct Piece {
  std::size_t chunk = 0;
  std::vector<Column> values;
  std::vector<std::uint8_t> defined;
  std::vector<std::uint64_t> offsets;  // pattern mode
};

struct BorderEntry {
  std::vector<AggState> states;
  bool owned = false;  // the origin's own chunk reported it (every-valid-cell mode)
  std::uint64_t chunk = 0;
  std::uint64_t row = 0;
};

using BorderMap = std::unordered_map<Coord, BorderEntry, CoordHash>;

template <typename T>
void set_value(Column& col, std::size_t i, const CellValue& v) {
  auto& vec = std::get<std::vector<T>>(col);
  if constexpr (std::is_same_v<T, double>)
    vec[i] = v.as_double();
  else
    vec[i] = v.as_int();
}

void write(Column& col, std::size_t i, const CellValue& v) {
  if (std::holds_alternative<std::vector<double>>(col))
    set_value<double>(col, i, v);
  else
    set_value<std::int64_t>(col, i, v);
}

void append(Column& col, const CellValue& v) {
  std::visit(
      [&](auto& vec) {
        using T = typename std::remove_cvref_t<decltype(vec)>::value_type;
        if constexpr (std::is_same_v<T, double>)
          vec.push_back(v.as_double());
        else
          vec.push_back(v.as_int());
      },
      col);
}

/// Results of all aggregates, or nullopt when one is undefined.
std::optional<std::vector<CellValue>> results(const std::vector<AggState>& st, const Cfg& cfg) {
  std::vector<CellValue> out;
  out.reserve(st.size());
  for (std::size_t i = 0; i < st.size(); ++i) {
    auto v = st[i].result();
    if (!v) return std::nullopt;
    out.push_back(v->cast(cfg.out_attrs[i].kind));
  }
  return out;
}

void merge_states(std::vector<AggState>& into, const std::vector<AggState>& from) {
  for (std::size_t i = 0; i < into.size(); ++i) into[i].merge(from[i]);
}

class ApplyPlusGla {
 public:
  static constexpr bool kChunkAtATime = true;
  using Row = Piece;

  ApplyPlusGla(std::shared_ptr<const Cfg> cfg, bool overlap) : cfg_(std::move(cfg)), overlap_(overlap) {}

  void accumulate_chunk(const Chunk& c) {
    const Cfg& cfg = *cfg_;
    if (overlap_) {
      const std::size_t xi = static_cast<std::size_t>(c.id);
      process(xi, *cfg.chunks[xi], View(c, cfg), true);
    } else {
      const std::size_t xi = cfg.index_of.at(&c);
      process(xi, c, View(c, cfg), false);
    }
  }

  void end_chunk(const Chunk&, std::vector<Piece>& rows) { rows.push_back(std::move(pending_)); }

  void local_merge(ApplyPlusGla&& other) {
    for (auto& [o, e] : other.border_) absorb(o, std::move(e));
    other.border_.clear();
  }

  void serialize(ByteWriter& out) const {
    out.put<std::uint64_t>(border_.size());
    for (const auto& [o, e] : border_) {
      for (auto v : o.values()) out.put<std::int64_t>(v);
      out.put<std::uint8_t>(e.owned);
      out.put<std::uint64_t>(e.chunk);
      out.put<std::uint64_t>(e.row);
      for (const auto& s : e.states) s.serialize(out);
    }
  }

  void remote_merge(ByteReader& in) {
    const auto n = in.get<std::uint64_t>();
    for (std::uint64_t k = 0; k < n; ++k) {
      Coord o(cfg_->nd);
      for (std::size_t d = 0; d < cfg_->nd; ++d) o[d] = in.get<std::int64_t>();
      BorderEntry e;
      e.owned = in.get<std::uint8_t>() != 0;
      e.chunk = in.get<std::uint64_t>();
      e.row = in.get<std::uint64_t>();
      e.states = cfg_->fresh();
      for (auto& s : e.states) s.merge_bytes(in);
      absorb(o, std::move(e));
    }
  }

  BorderMap terminate() { return std::move(border_); }
  std::uint64_t local_terminate() { return border_.size(); }

 private:
  void absorb(const Coord& o, BorderEntry&& e) {
    auto it = border_.find(o);
    if (it == border_.end()) {
      border_.emplace(o, std::move(e));
      return;
    }
    merge_states(it->second.states, e.states);
    if (e.owned) {
      it->second.owned = true;
      it->second.chunk = e.chunk;
      it->second.row = e.row;
    }
  }

  bool is_local(std::size_t xi, const Box& w) const {
    for (auto j : cfg_->neighbors[xi])
      if (boxes_overlap(cfg_->chunks[j]->box, w)) return false;
    return true;
  }

  /// Owner of a pattern origin under overlap: the lowest-index chunk its window touches.
  bool owns(std::size_t xi, const Box& w) const {
    for (auto j : cfg_->neighbors[xi])
      if (j < xi && boxes_overlap(cfg_->chunks[j]->box, w)) return false;
    return true;
  }

  void put_local(Piece& p, std::size_t slot, const std::vector<AggState>& st) {
    auto r = results(st, *cfg_);
    if (!r) return;
    for (std::size_t i = 0; i < r->size(); ++i) write(p.values[i], slot, (*r)[i]);
    p.defined[slot] = 1;
  }

  void process(std::size_t xi, const Chunk& x, const View& view, bool confined) {
    const Cfg& cfg = *cfg_;
    Piece piece;
    piece.chunk = xi;
    std::uint64_t local = 0;
    if (!cfg.pattern) {
      const std::size_t n = x.rows();
      for (const auto& a : cfg.out_attrs) piece.values.push_back(make_column(a.kind, n));
      piece.defined.assign(n, 0);
      auto handle = [&](std::size_t r) {
        const Coord o = x.coords(r);
        const Box w = cfg.window(o);
        auto st = cfg.fresh();
        view.gather(w, st);
        if (confined || is_local(xi, w)) {
          ++local;
          put_local(piece, r, st);
          return;
        }
        BorderEntry e;
        e.states = std::move(st);
        e.owned = true;
        e.chunk = xi;
        e.row = r;
        absorb(o, std::move(e));
      };
      if (x.dense())
        x.validity.for_each_set(handle);
      else
        for (std::size_t r = 0; r < n; ++r) handle(r);

      if (!confined) {
        // Origins held by neighbouring chunks whose windows reach into this one.
        std::unordered_set<Coord, CoordHash> seen;
        for (auto j : cfg.neighbors[xi]) {
          auto region = box_intersect(cfg.candidates[xi], cfg.chunks[j]->box);
          if (!region) continue;
          for_each_cell(*region, [&](const Coord& o, std::uint64_t) {
            if (x.box.contains(o) || !seen.insert(o).second) return;
            auto st = cfg.fresh();
            if (!view.gather(cfg.window(o), st)) return;
            BorderEntry e;
            e.states = std::move(st);
            absorb(o, std::move(e));
          });
        }
      }
    } else {
      for (const auto& a : cfg.out_attrs) piece.values.push_back(make_column(a.kind, 0));
      std::vector<std::vector<std::int64_t>> axis(cfg.nd);
      bool empty = false;
      for (std::size_t d = 0; d < cfg.nd; ++d) {
        axis[d] = cfg.pdims[d].origins_in(cfg.candidates[xi][d]);
        empty = empty || axis[d].empty();
      }
      if (!empty) {
        std::vector<std::size_t> idx(cfg.nd, 0);
        Coord o(cfg.nd);
        while (true) {
          for (std::size_t d = 0; d < cfg.nd; ++d) o[d] = axis[d][idx[d]];
          const Box w = cfg.window(o);
          if (boxes_overlap(w, x.box)) {
            const bool mine = confined ? owns(xi, w) : true;
            if (mine) {
              auto st = cfg.fresh();
              const bool any = view.gather(w, st);
              if (confined || is_local(xi, w)) {
                ++local;
                if (auto r = results(st, cfg)) {
                  piece.offsets.push_back(cfg.out_offset(o));
                  for (std::size_t i = 0; i < r->size(); ++i) append(piece.values[i], (*r)[i]);
                }
              } else if (any) {
                BorderEntry e;
                e.states = std::move(st);
                absorb(o, std::move(e));
              }
            }
          }
          std::size_t d = cfg.nd;
          bool done = true;
          while (d-- > 0) {
            if (++idx[d] < axis[d].size()) {
              done = false;
              break;
            }
            idx[d] = 0;
          }
          if (done) break;
        }
      }
    }
    cfg.counters->local += local;
    pending_ = std::move(piece);
  }

  std::shared_ptr<const Cfg> cfg_;
  bool overlap_;
  BorderMap border_;
  Piece pending_;
};

/// Chunk over `h` holding the needed attributes of every chunk cell inside it.
Chunk build_halo(const Cfg& cfg, std::size_t xi, const Box& h) {
  std::vector<std::size_t> sources{xi};
  for (auto j : cfg.neighbors[xi])
    if (boxes_overlap(cfg.chunks[j]->box, h)) sources.push_back(j);
  std::vector<AttributeSpec> attrs;
  for (const auto& a : cfg.aggs) {
    if (a.attr.empty() || a.attr == "*") continue;
    if (std::none_of(attrs.begin(), attrs.end(), [&](const auto& x) { return x.name == a.attr; }))
      attrs.push_back({a.attr, cfg.in_kinds[static_cast<std::size_t>(&a - cfg.aggs.data())]});
  }
  const bool all_dense =
      std::all_of(sources.begin(), sources.end(), [&](std::size_t j) { return cfg.chunks[j]->dense(); });
  std::uint64_t replicated = 0;
  Chunk out;
  if (all_dense) {
    const std::size_t cells = h.volume();
    std::vector<Column> cols;
    for (const auto& a : attrs) cols.push_back(make_column(a.kind, cells));
    Bitmap valid(cells);
    for (auto j : sources) {
      const Chunk& s = *cfg.chunks[j];
      auto sub = box_intersect(s.box, h);
      if (!sub) continue;
      std::vector<std::size_t> src_cols;
      for (const auto& a : attrs) src_cols.push_back(*s.attr_index(a.name));
      for_each_cell(*sub, [&](const Coord& c, std::uint64_t) {
        const std::uint64_t so = offset_in(s.box, c);
        if (!s.validity.get(so)) return;
        const std::uint64_t dst = offset_in(h, c);
        valid.set(dst);
        for (std::size_t a = 0; a < attrs.size(); ++a) write(cols[a], dst, s.value(src_cols[a], so));
        if (j != xi) ++replicated;
      });
    }
    std::vector<ColumnPtr> ptrs;
    for (auto& c : cols) ptrs.push_back(std::make_shared<const Column>(std::move(c)));
    out = make_dense_chunk(static_cast<std::int64_t>(xi), h, attrs, std::move(ptrs), std::move(valid));
  } else {
    std::vector<std::vector<std::int64_t>> coords(cfg.nd);
    std::vector<Column> cols;
    for (const auto& a : attrs) cols.push_back(make_column(a.kind, 0));
    for (auto j : sources) {
      const Chunk& s = *cfg.chunks[j];
      std::vector<std::size_t> src_cols;
      for (const auto& a : attrs) src_cols.push_back(*s.attr_index(a.name));
      auto take = [&](std::size_t r) {
        const Coord c = s.coords(r);
        if (!h.contains(c)) return;
        for (std::size_t d = 0; d < cfg.nd; ++d) coords[d].push_back(c[d]);
        for (std::size_t a = 0; a < attrs.size(); ++a) append(cols[a], s.value(src_cols[a], r));
        if (j != xi) ++replicated;
      };
      if (s.dense())
        s.validity.for_each_set(take);
      else
        for (std::size_t r = 0, n = s.rows(); r < n; ++r) take(r);
    }
    std::vector<ColumnPtr> ptrs;
    for (auto& c : cols) ptrs.push_back(std::make_shared<const Column>(std::move(c)));
    out = make_sparse_chunk(static_cast<std::int64_t>(xi), h, attrs, coords, std::move(ptrs));
  }
  cfg.counters->halo += replicated;
  return out;
}

std::shared_ptr<Cfg> configure(const Array& in, const ApplyPlusSpec& spec) {
  auto cfg = std::make_shared<Cfg>();
  const auto& schema = in.schema;
  cfg->nd = schema.dims.size();
  cfg->array_box = schema.box();
  if (spec.shape.offsets.size() != cfg->nd) fail(Errc::config, "APPLY+ shape dimensionality mismatch");
  for (std::size_t d = 0; d < cfg->nd; ++d) {
    const Range& r = spec.shape.offsets[d];
    if (r.lo > r.hi) fail(Errc::config, "APPLY+ shape " + spec.shape.to_string() + " is inverted");
    if (r.extent() > cfg->array_box[d].extent())
      fail(Errc::domain, "APPLY+ shape " + spec.shape.to_string() + " exceeds array box " + cfg->array_box.to_string());
  }
  cfg->shape = spec.shape.offsets;
  if (!spec.patterns.empty()) {
    if (spec.patterns.size() != cfg->nd) fail(Errc::config, "APPLY+ needs one bit pattern per dimension");
    cfg->pattern = true;
    std::vector<Range> out;
    for (std::size_t d = 0; d < cfg->nd; ++d) {
      cfg->pdims.emplace_back(spec.patterns[d], cfg->array_box[d].lo);
      out.push_back({0, cfg->pdims[d].rank(cfg->array_box[d].hi + 1) - 1});
    }
    cfg->out_box = Box(std::span<const Range>(out));
  }
  cfg->clip = cfg->pattern && spec.clip_to_next_origin;
  if (spec.aggs.empty()) fail(Errc::config, "APPLY+ needs an aggregate");
  for (const auto& a : spec.aggs) {
    AttrKind k = AttrKind::int64;
    if (!a.attr.empty() && a.attr != "*")
      k = schema.attrs[schema.require_attr(a.attr)].kind;
    else if (a.kind != AggKind::count)
      fail(Errc::config, std::string(to_string(a.kind)) + " needs an attribute");
    const AggState probe(a.kind, k, a.user);
    cfg->aggs.push_back(a);
    cfg->in_kinds.push_back(k);
    cfg->out_attrs.push_back({a.output_name(), probe.result_kind()});
    if (a.kind != AggKind::count && a.kind != AggKind::count_distinct) cfg->all_count = false;
  }
  for (std::size_t i = 0; i < cfg->out_attrs.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (cfg->out_attrs[i].name == cfg->out_attrs[j].name)
        fail(Errc::config, "APPLY+ output attribute '" + cfg->out_attrs[i].name + "' repeated");

  cfg->chunks = in.chunks;
  const std::size_t n = in.chunks.size();
  for (std::size_t i = 0; i < n; ++i) {
    cfg->index_of.emplace(in.chunks[i].get(), i);
    const Box& b = in.chunks[i]->box;
    Box c = b, r = b;
    for (std::size_t d = 0; d < cfg->nd; ++d) {
      c[d] = {b[d].lo - cfg->shape[d].hi, b[d].hi - cfg->shape[d].lo};
      r[d] = {c[d].lo + cfg->shape[d].lo, c[d].hi + cfg->shape[d].hi};
    }
    auto ci = box_intersect(c, cfg->array_box);
    cfg->candidates.push_back(ci ? *ci : b);
    cfg->reach.push_back(r);
  }
  cfg->neighbors.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j && boxes_overlap(cfg->reach[i], in.chunks[j]->box)) cfg->neighbors[i].push_back(j);
  return cfg;
}

Array assemble(const Array& in, const Cfg& cfg, std::vector<Piece>& pieces, BorderMap& border, int root,
               ApplyPlusStats* stats) {
  Array out;
  out.n_workers = in.n_workers;
  out.schema = in.schema;
  out.schema.attrs = cfg.out_attrs;
  if (stats) stats->border_states = border.size();

  if (!cfg.pattern) {
    std::vector<Piece*> by_chunk(in.chunks.size(), nullptr);
    for (auto& p : pieces) by_chunk[p.chunk] = &p;
    for (auto& [o, e] : border) {
      if (!e.owned) continue;  // not a valid cell of any chunk
      Piece* p = by_chunk.at(e.chunk);
      if (!p) fail(Errc::internal, "APPLY+ border state for an unprocessed chunk");
      auto r = results(e.states, cfg);
      if (!r) continue;
      for (std::size_t i = 0; i < r->size(); ++i) write(p->values[i], e.row, (*r)[i]);
      p->defined[e.row] = 1;
    }
    for (std::size_t i = 0; i < in.chunks.size(); ++i) {
      const Chunk& x = *in.chunks[i];
      Piece* p = by_chunk[i];
      if (!p) fail(Errc::internal, "APPLY+ chunk produced no output");
      if (x.dense()) {
        Bitmap valid(x.rows());
        for (std::size_t r = 0; r < p->defined.size(); ++r)
          if (p->defined[r]) valid.set(r);
        std::vector<ColumnPtr> cols;
        for (auto& c : p->values) cols.push_back(std::make_shared<const Column>(std::move(c)));
        out.chunks.push_back(
            std::make_shared<const Chunk>(make_dense_chunk(x.id, x.box, cfg.out_attrs, std::move(cols), std::move(valid))));
      } else {
        std::vector<std::size_t> rows;
        for (std::size_t r = 0; r < p->defined.size(); ++r)
          if (p->defined[r]) rows.push_back(r);
        if (rows.empty()) continue;
        std::vector<std::vector<std::int64_t>> coords(cfg.nd);
        for (auto r : rows)
          for (std::size_t d = 0; d < cfg.nd; ++d) coords[d].push_back(x.coord(r, d));
        std::vector<ColumnPtr> cols;
        for (auto& c : p->values) cols.push_back(std::make_shared<const Column>(gather(c, rows)));
        out.chunks.push_back(
            std::make_shared<const Chunk>(make_sparse_chunk(x.id, x.box, cfg.out_attrs, coords, std::move(cols))));
      }
      out.placement.push_back(in.worker_of(i));
    }
    return out;
  }

  const std::size_t cells = cfg.out_box.volume();
  std::vector<Column> cols;
  for (const auto& a : cfg.out_attrs) cols.push_back(make_column(a.kind, cells));
  Bitmap valid(cells, cfg.all_count);
  for (auto& p : pieces) {
    for (std::size_t k = 0; k < p.offsets.size(); ++k) {
      const std::uint64_t off = p.offsets[k];
      for (std::size_t i = 0; i < cols.size(); ++i) write(cols[i], off, column_get(p.values[i], k));
      valid.set(off);
    }
  }
  for (auto& [o, e] : border) {
    auto r = results(e.states, cfg);
    if (!r) continue;
    const std::uint64_t off = cfg.out_offset(o);
    for (std::size_t i = 0; i < cols.size(); ++i) write(cols[i], off, (*r)[i]);
    valid.set(off);
  }
  for (std::size_t d = 0; d < cfg.nd; ++d) {
    out.schema.dims[d].lo = cfg.out_box[d].lo;
    out.schema.dims[d].hi = cfg.out_box[d].hi;
  }
  out.schema.density = Density::dense;
  out.schema.origin.clear();
  std::vector<ColumnPtr> ptrs;
  for (auto& c : cols) ptrs.push_back(std::make_shared<const Column>(std::move(c)));
  out.chunks.push_back(
      std::make_shared<const Chunk>(make_dense_chunk(0, cfg.out_box, cfg.out_attrs, std::move(ptrs), std::move(valid))));
  out.placement.push_back(root);
  return out;
}

}  // namespace

std::int64_t pattern_origin_count(std::string_view pattern, std::int64_t extent) {
  if (extent <= 0) return 0;
  const PatternDim p{std::string(pattern), 0};
  return p.rank(extent);
}

Array apply_plus(const Array& in, const ApplyPlusSpec& spec, const GlaOptions& options, ApplyPlusStats* stats) {
  in.schema.validate();
  auto cfg = configure(in, spec);
  const AggregationTree tree = options.tree ? *options.tree
                                            : AggregationTree::build(AggregationTree::Shape::balanced_binary,
                                                                     std::max(1, in.n_workers));
  GlaOptions opt = options;
  opt.tree = tree;

  std::vector<Piece> pieces;
  BorderMap border;
  if (spec.boundary == Boundary::merge) {
    std::shared_ptr<const Cfg> c = cfg;
    auto run = run_gla<ApplyPlusGla>(in, [c] { return ApplyPlusGla(c, false); }, opt);
    pieces = std::move(run.rows);
    border = std::move(run.result);
    if (stats) stats->gla = run.stats;
  } else {
    // Replicate the cells each chunk's windows need, then compute every chunk alone.
    Array halos;
    halos.schema = in.schema;
    halos.n_workers = in.n_workers;
    for (std::size_t i = 0; i < in.chunks.size(); ++i) {
      auto h = box_intersect(cfg->reach[i], cfg->array_box);
      halos.chunks.push_back(std::make_shared<const Chunk>(build_halo(*cfg, i, h ? *h : in.chunks[i]->box)));
      halos.placement.push_back(in.worker_of(i));
    }
    std::shared_ptr<const Cfg> c = cfg;
    auto run = run_gla_confined<ApplyPlusGla>(halos, [c] { return ApplyPlusGla(c, true); }, opt);
    pieces = std::move(run.rows);
    if (stats) stats->gla = run.stats;
  }
  Array out = assemble(in, *cfg, pieces, border, tree.root, stats);
  if (stats) {
    stats->local_origins = cfg->counters->local;
    stats->halo_cells = cfg->counters->halo;
  }
  return out;
}

}  // namespace aql
