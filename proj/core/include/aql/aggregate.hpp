#pragma once

#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "aql/array_model.hpp"
#include "aql/bytes.hpp"

namespace aql {

enum class AggKind : std::uint8_t { sum, count, avg, min, max, count_distinct, user };

std::string_view to_string(AggKind kind);
AggKind parse_agg_kind(std::string_view text);

/// User-defined aggregate over one attribute. Implementations must satisfy the
/// merge laws: merge is associative and commutative, and merge_bytes(serialize(t))
/// has the same effect as merge(t).
class UserAggregate {
 public:
  virtual ~UserAggregate() = default;
  virtual std::string name() const = 0;
  virtual std::unique_ptr<UserAggregate> fresh() const = 0;
  virtual std::unique_ptr<UserAggregate> clone() const = 0;
  virtual void add(const CellValue& v) = 0;
  virtual void merge(const UserAggregate& other) = 0;
  virtual void serialize(ByteWriter& out) const = 0;
  virtual void merge_bytes(ByteReader& in) = 0;
  virtual std::optional<CellValue> result() const = 0;
  virtual AttrKind result_kind(AttrKind input) const = 0;
};

struct AggSpec {
  AggKind kind = AggKind::count;
  std::string attr;     // empty for count(*)
  std::string output;   // result attribute name; defaults to "<kind>_<attr>"
  std::shared_ptr<const UserAggregate> user;

  std::string output_name() const;
};

/// Running state of one aggregate. Integer sums are exact; float sums use
/// compensated (double-double) accumulation so results do not depend on order.
class AggState {
 public:
  AggState() = default;
  /// count_distinct over float64 input is a config error.
  AggState(AggKind kind, AttrKind input, const std::shared_ptr<const UserAggregate>& user = nullptr);
  AggState(const AggState& other);
  AggState& operator=(const AggState& other);
  AggState(AggState&&) noexcept = default;
  AggState& operator=(AggState&&) noexcept = default;

  AggKind kind() const { return kind_; }
  AttrKind input_kind() const { return input_; }
  std::uint64_t count() const { return n_; }

  void add(const CellValue& v) {
    if (v.is_int())
      add_int(v.as_int());
    else
      add_double(v.as_double());
  }
  void add_int(std::int64_t v);
  void add_double(double v);
  void merge(const AggState& other);

  void serialize(ByteWriter& out) const;
  /// Merges a state previously written by serialize() of an identically configured state.
  void merge_bytes(ByteReader& in);

  /// nullopt when undefined (no input for sum/avg/min/max/user); count kinds always defined.
  std::optional<CellValue> result() const;
  AttrKind result_kind() const;

 private:
  void dd_add(double x);
  void compact_distinct() const;

  AggKind kind_ = AggKind::count;
  AttrKind input_ = AttrKind::int64;
  std::uint64_t n_ = 0;
  std::int64_t isum_ = 0;
  double hi_ = 0.0, lo_ = 0.0;
  CellValue min_, max_;
  mutable std::vector<std::int64_t> distinct_;
  mutable std::size_t distinct_sorted_ = 0;  // prefix already sorted and unique
  std::unique_ptr<UserAggregate> user_;
};

inline void AggState::add_int(std::int64_t v) {
  switch (kind_) {
    case AggKind::count: ++n_; return;
    case AggKind::sum:
    case AggKind::avg:
      ++n_;
      if (input_ == AttrKind::int64) {
        if (__builtin_add_overflow(isum_, v, &isum_)) fail(Errc::domain, "integer sum overflow");
      } else {
        dd_add(static_cast<double>(v));
      }
      return;
    case AggKind::min:
      if (n_++ == 0 || v < min_.as_int()) min_ = CellValue(v);
      return;
    case AggKind::max:
      if (n_++ == 0 || v > max_.as_int()) max_ = CellValue(v);
      return;
    default: break;
  }
  if (kind_ == AggKind::count_distinct) {
    ++n_;
    distinct_.push_back(v);
    if (distinct_.size() > 2 * distinct_sorted_ + 1024) compact_distinct();
    return;
  }
  ++n_;
  user_->add(CellValue(v));
}

// ---------------------------------------------------------------------------
// Grouped results

struct TableRow {
  Coord key;
  std::vector<CellValue> values;
};

/// Result of REDUCE: one row per group, sorted by key.
struct Table {
  std::vector<std::string> key_names;
  std::vector<AttributeSpec> columns;
  std::vector<TableRow> rows;

  std::size_t size() const { return rows.size(); }
  std::string to_string(std::size_t max_rows = 20) const;
};

/// Group-by GLA: groups valid cells by the kept dimensions and aggregates each
/// spec. Groups only exist once they see a valid cell, so with no kept
/// dimensions and no valid input the result has no rows.
class ReduceGla {
 public:
  static constexpr bool kChunkAtATime = true;

  struct Config {
    std::vector<std::size_t> keep_dims;  // indices into the input dimensions
    std::vector<std::string> key_names;
    std::vector<AggSpec> aggs;
    std::vector<AttrKind> input_kinds;  // per agg; int64 for count(*)
  };

  /// Validates the specs against `schema` (unknown names: schema error;
  /// count_distinct on float: config error).
  static std::shared_ptr<const Config> configure(const ArraySchema& schema, const std::vector<std::string>& keep_dims,
                                                 const std::vector<AggSpec>& aggs);

  explicit ReduceGla(std::shared_ptr<const Config> config) : cfg_(std::move(config)) {}

  void accumulate_chunk(const Chunk& chunk);
  void local_merge(ReduceGla&& other);
  void serialize(ByteWriter& out) const;
  void remote_merge(ByteReader& in);
  Table terminate();
  Table local_terminate() { return terminate(); }

 private:
  std::vector<AggState> fresh_states() const;
  std::vector<AggState>& group(const Coord& key);

  std::shared_ptr<const Config> cfg_;
  std::unordered_map<Coord, std::vector<AggState>, CoordHash> groups_;
};

}  // namespace aql
