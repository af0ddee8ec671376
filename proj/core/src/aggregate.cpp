#include "aql/aggregate.hpp"

#include <algorithm>
#include <sstream>

namespace aql {

std::string_view to_string(AggKind kind) {
  switch (kind) {
    case AggKind::sum: return "sum";
    case AggKind::count: return "count";
    case AggKind::avg: return "avg";
    case AggKind::min: return "min";
    case AggKind::max: return "max";
    case AggKind::count_distinct: return "count_distinct";
    case AggKind::user: return "user";
  }
  return "?";
}

AggKind parse_agg_kind(std::string_view text) {
  for (auto k : {AggKind::sum, AggKind::count, AggKind::avg, AggKind::min, AggKind::max, AggKind::count_distinct})
    if (text == to_string(k)) return k;
  if (text == "countdistinct" || text == "distinct") return AggKind::count_distinct;
  fail(Errc::config, "unknown aggregate '" + std::string(text) + "'");
}

std::string AggSpec::output_name() const {
  if (!output.empty()) return output;
  const std::string k = kind == AggKind::user && user ? user->name() : std::string(to_string(kind));
  return attr.empty() ? k : k + "_" + attr;
}

// ---------------------------------------------------------------------------

AggState::AggState(AggKind kind, AttrKind input, const std::shared_ptr<const UserAggregate>& user)
    : kind_(kind), input_(input) {
  if (kind == AggKind::count_distinct && input == AttrKind::float64)
    fail(Errc::config, "count_distinct is not defined on float attributes");
  if (kind == AggKind::user) {
    if (!user) fail(Errc::config, "user aggregate without implementation");
    user_ = user->fresh();
  }
}

AggState::AggState(const AggState& o)
    : kind_(o.kind_), input_(o.input_), n_(o.n_), isum_(o.isum_), hi_(o.hi_), lo_(o.lo_), min_(o.min_),
      max_(o.max_), distinct_(o.distinct_), distinct_sorted_(o.distinct_sorted_),
      user_(o.user_ ? o.user_->clone() : nullptr) {}

AggState& AggState::operator=(const AggState& o) {
  if (this != &o) {
    AggState tmp(o);
    *this = std::move(tmp);
  }
  return *this;
}

void AggState::dd_add(double x) {
  const double s = hi_ + x;
  const double bp = s - hi_;
  const double err = (hi_ - (s - bp)) + (x - bp);
  hi_ = s;
  lo_ += err;
}

void AggState::add_double(double v) {
  switch (kind_) {
    case AggKind::count: ++n_; return;
    case AggKind::sum:
    case AggKind::avg:
      ++n_;
      if (input_ == AttrKind::int64) {
        if (__builtin_add_overflow(isum_, static_cast<std::int64_t>(v), &isum_))
          fail(Errc::domain, "integer sum overflow");
      } else {
        dd_add(v);
      }
      return;
    case AggKind::min:
      if (n_++ == 0 || v < min_.as_double()) min_ = CellValue(v);
      return;
    case AggKind::max:
      if (n_++ == 0 || v > max_.as_double()) max_ = CellValue(v);
      return;
    case AggKind::count_distinct: fail(Errc::config, "count_distinct is not defined on float values");
    case AggKind::user:
      ++n_;
      user_->add(CellValue(v));
      return;
  }
}

void AggState::compact_distinct() const {
  std::sort(distinct_.begin(), distinct_.end());
  distinct_.erase(std::unique(distinct_.begin(), distinct_.end()), distinct_.end());
  distinct_sorted_ = distinct_.size();
}

void AggState::merge(const AggState& o) {
  if (o.kind_ != kind_) fail(Errc::contract, "merging aggregates of different kinds");
  if (o.n_ == 0) return;
  switch (kind_) {
    case AggKind::count: break;
    case AggKind::sum:
    case AggKind::avg:
      if (input_ == AttrKind::int64) {
        if (__builtin_add_overflow(isum_, o.isum_, &isum_)) fail(Errc::domain, "integer sum overflow");
      } else {
        dd_add(o.hi_);
        dd_add(o.lo_);
      }
      break;
    case AggKind::min:
      if (n_ == 0 || o.min_ < min_) min_ = o.min_;
      break;
    case AggKind::max:
      if (n_ == 0 || max_ < o.max_) max_ = o.max_;
      break;
    case AggKind::count_distinct:
      distinct_.insert(distinct_.end(), o.distinct_.begin(), o.distinct_.end());
      compact_distinct();
      break;
    case AggKind::user: user_->merge(*o.user_); break;
  }
  n_ += o.n_;
}

void AggState::serialize(ByteWriter& out) const {
  out.put<std::uint64_t>(n_);
  switch (kind_) {
    case AggKind::count: break;
    case AggKind::sum:
    case AggKind::avg:
      if (input_ == AttrKind::int64) {
        out.put<std::int64_t>(isum_);
      } else {
        out.put<double>(hi_);
        out.put<double>(lo_);
      }
      break;
    case AggKind::min:
    case AggKind::max: {
      const CellValue& v = kind_ == AggKind::min ? min_ : max_;
      if (input_ == AttrKind::int64)
        out.put<std::int64_t>(v.as_int());
      else
        out.put<double>(v.as_double());
      break;
    }
    case AggKind::count_distinct:
      compact_distinct();
      out.put<std::uint64_t>(distinct_.size());
      out.put_span<std::int64_t>(distinct_);
      break;
    case AggKind::user: user_->serialize(out); break;
  }
}

void AggState::merge_bytes(ByteReader& in) {
  AggState other(*this);
  other.n_ = in.get<std::uint64_t>();
  other.isum_ = 0;
  other.hi_ = other.lo_ = 0.0;
  other.distinct_.clear();
  other.distinct_sorted_ = 0;
  if (other.user_) other.user_ = other.user_->fresh();
  switch (kind_) {
    case AggKind::count: break;
    case AggKind::sum:
    case AggKind::avg:
      if (input_ == AttrKind::int64) {
        other.isum_ = in.get<std::int64_t>();
      } else {
        other.hi_ = in.get<double>();
        other.lo_ = in.get<double>();
      }
      break;
    case AggKind::min:
    case AggKind::max: {
      const CellValue v = input_ == AttrKind::int64 ? CellValue(in.get<std::int64_t>()) : CellValue(in.get<double>());
      (kind_ == AggKind::min ? other.min_ : other.max_) = v;
      break;
    }
    case AggKind::count_distinct: {
      const auto k = in.get<std::uint64_t>();
      if (k > in.remaining() / 8) fail(Errc::format, "corrupt count_distinct state");
      other.distinct_.resize(k);
      in.get_into(std::span<std::int64_t>(other.distinct_));
      other.distinct_sorted_ = k;
      break;
    }
    case AggKind::user: other.user_->merge_bytes(in); break;
  }
  merge(other);
}

std::optional<CellValue> AggState::result() const {
  switch (kind_) {
    case AggKind::count: return CellValue(static_cast<std::int64_t>(n_));
    case AggKind::count_distinct:
      compact_distinct();
      return CellValue(static_cast<std::int64_t>(distinct_.size()));
    default: break;
  }
  if (n_ == 0) return std::nullopt;
  switch (kind_) {
    case AggKind::sum: return input_ == AttrKind::int64 ? CellValue(isum_) : CellValue(hi_ + lo_);
    case AggKind::avg:
      if (input_ == AttrKind::int64) return CellValue(static_cast<double>(isum_) / static_cast<double>(n_));
      return CellValue((hi_ + lo_) / static_cast<double>(n_));
    case AggKind::min: return min_;
    case AggKind::max: return max_;
    case AggKind::user: return user_->result();
    default: return std::nullopt;
  }
}

AttrKind AggState::result_kind() const {
  switch (kind_) {
    case AggKind::count:
    case AggKind::count_distinct: return AttrKind::int64;
    case AggKind::avg: return AttrKind::float64;
    case AggKind::user: return user_->result_kind(input_);
    default: return input_;
  }
}

// ---------------------------------------------------------------------------

std::string Table::to_string(std::size_t max_rows) const {
  std::ostringstream os;
  for (const auto& k : key_names) os << k << "\t";
  for (std::size_t i = 0; i < columns.size(); ++i) os << (i ? "\t" : "") << columns[i].name;
  os << "\n";
  for (std::size_t r = 0; r < rows.size() && r < max_rows; ++r) {
    for (auto v : rows[r].key.values()) os << v << "\t";
    for (std::size_t i = 0; i < rows[r].values.size(); ++i) os << (i ? "\t" : "") << rows[r].values[i].to_string();
    os << "\n";
  }
  if (rows.size() > max_rows) os << "... (" << rows.size() << " rows)\n";
  return os.str();
}

std::shared_ptr<const ReduceGla::Config> ReduceGla::configure(const ArraySchema& schema,
                                                              const std::vector<std::string>& keep_dims,
                                                              const std::vector<AggSpec>& aggs) {
  auto cfg = std::make_shared<Config>();
  for (const auto& d : keep_dims) {
    const std::size_t i = schema.require_dim(d);
    if (std::find(cfg->keep_dims.begin(), cfg->keep_dims.end(), i) != cfg->keep_dims.end())
      fail(Errc::config, "dimension '" + d + "' kept twice");
    cfg->keep_dims.push_back(i);
    cfg->key_names.push_back(d);
  }
  if (aggs.empty()) fail(Errc::config, "reduce needs at least one aggregate");
  for (const auto& a : aggs) {
    AttrKind kind = AttrKind::int64;
    if (!a.attr.empty() && a.attr != "*") {
      kind = schema.attrs[schema.require_attr(a.attr)].kind;
    } else if (a.kind != AggKind::count) {
      fail(Errc::config, std::string(to_string(a.kind)) + " needs an attribute");
    }
    AggState probe(a.kind, kind, a.user);  // validates kind/type combination
    cfg->aggs.push_back(a);
    cfg->input_kinds.push_back(kind);
  }
  return cfg;
}

std::vector<AggState> ReduceGla::fresh_states() const {
  std::vector<AggState> s;
  s.reserve(cfg_->aggs.size());
  for (std::size_t i = 0; i < cfg_->aggs.size(); ++i) s.emplace_back(cfg_->aggs[i].kind, cfg_->input_kinds[i], cfg_->aggs[i].user);
  return s;
}

std::vector<AggState>& ReduceGla::group(const Coord& key) {
  auto it = groups_.find(key);
  if (it == groups_.end()) it = groups_.emplace(key, fresh_states()).first;
  return it->second;
}

void ReduceGla::accumulate_chunk(const Chunk& chunk) {
  const auto& aggs = cfg_->aggs;
  std::vector<const Column*> cols(aggs.size(), nullptr);
  for (std::size_t i = 0; i < aggs.size(); ++i) {
    if (aggs[i].attr.empty() || aggs[i].attr == "*") continue;
    auto idx = chunk.attr_index(aggs[i].attr);
    if (!idx) fail(Errc::schema, "chunk lacks attribute '" + aggs[i].attr + "'");
    cols[i] = chunk.columns[*idx].get();
  }
  const std::size_t n = chunk.rows();
  if (chunk.valid_count() == 0) return;

  if (cfg_->keep_dims.empty()) {
    auto& states = group(Coord(0));
    for (std::size_t i = 0; i < aggs.size(); ++i) {
      AggState& st = states[i];
      if (!cols[i]) {
        for (std::size_t k = 0, m = chunk.valid_count(); k < m; ++k) st.add_int(0);
        continue;
      }
      std::visit(
          [&](const auto& v) {
            using T = typename std::remove_cvref_t<decltype(v)>::value_type;
            auto add = [&](std::size_t r) {
              if constexpr (std::is_same_v<T, double>)
                st.add_double(v[r]);
              else
                st.add_int(v[r]);
            };
            if (chunk.dense())
              chunk.validity.for_each_set(add);
            else
              for (std::size_t r = 0; r < n; ++r) add(r);
          },
          *cols[i]);
    }
    return;
  }

  const auto& kd = cfg_->keep_dims;
  Coord key(kd.size());
  auto visit_row = [&](std::size_t r) {
    if (chunk.dense()) {
      const Coord c = coords_in(chunk.box, r);
      for (std::size_t k = 0; k < kd.size(); ++k) key[k] = c[kd[k]];
    } else {
      for (std::size_t k = 0; k < kd.size(); ++k) key[k] = chunk.coord(r, kd[k]);
    }
    auto& states = group(key);
    for (std::size_t i = 0; i < aggs.size(); ++i) {
      if (cols[i])
        states[i].add(column_get(*cols[i], r));
      else
        states[i].add_int(0);
    }
  };
  if (chunk.dense())
    chunk.validity.for_each_set(visit_row);
  else
    for (std::size_t r = 0; r < n; ++r) visit_row(r);
}

void ReduceGla::local_merge(ReduceGla&& other) {
  for (auto& [key, states] : other.groups_) {
    auto it = groups_.find(key);
    if (it == groups_.end()) {
      groups_.emplace(key, std::move(states));
      continue;
    }
    for (std::size_t i = 0; i < states.size(); ++i) it->second[i].merge(states[i]);
  }
  other.groups_.clear();
}

void ReduceGla::serialize(ByteWriter& out) const {
  std::vector<const Coord*> keys;
  keys.reserve(groups_.size());
  for (const auto& [k, s] : groups_) keys.push_back(&k);
  std::sort(keys.begin(), keys.end(), [](const Coord* a, const Coord* b) { return *a < *b; });
  out.put<std::uint64_t>(keys.size());
  for (const Coord* k : keys) {
    for (auto v : k->values()) out.put<std::int64_t>(v);
    for (const auto& s : groups_.at(*k)) s.serialize(out);
  }
}

void ReduceGla::remote_merge(ByteReader& in) {
  const auto n = in.get<std::uint64_t>();
  const std::size_t nk = cfg_->keep_dims.size();
  for (std::uint64_t g = 0; g < n; ++g) {
    Coord key(nk);
    for (std::size_t k = 0; k < nk; ++k) key[k] = in.get<std::int64_t>();
    auto& states = group(key);
    for (auto& s : states) s.merge_bytes(in);
  }
}

Table ReduceGla::terminate() {
  Table t;
  t.key_names = cfg_->key_names;
  const auto proto = fresh_states();
  for (std::size_t i = 0; i < cfg_->aggs.size(); ++i)
    t.columns.push_back({cfg_->aggs[i].output_name(), proto[i].result_kind()});
  for (const auto& [key, states] : groups_) {
    TableRow row{key, {}};
    bool complete = true;
    for (const auto& s : states) {
      auto v = s.result();
      if (!v) {
        complete = false;
        break;
      }
      row.values.push_back(*v);
    }
    if (complete) t.rows.push_back(std::move(row));
  }
  std::sort(t.rows.begin(), t.rows.end(), [](const auto& a, const auto& b) { return a.key < b.key; });
  return t;
}

}  // namespace aql
