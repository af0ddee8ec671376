#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "aql/aggregate.hpp"
#include "aql/array_model.hpp"
#include "aql/expr.hpp"
#include "aql/gla.hpp"
#include "aql/storage.hpp"

namespace aql {

/// Counters for per-cell policies that do not abort a query.
struct Diagnostics {
  std::atomic<std::uint64_t> arithmetic_faults{0};
  std::atomic<std::uint64_t> chunks_skipped{0};  // excluded by zone metadata
};

/// Conjunction of inclusive attribute ranges plus an optional residual
/// expression. Only attributes may be referenced.
struct Predicate {
  std::vector<AttrRange> ranges;
  Expr residual;

  /// Splits `text` at top-level `&&`; simple `attr <op> constant` terms become
  /// ranges, everything else stays in the residual. Dimension names or float
  /// bounds on integer attributes are schema errors.
  static Predicate parse(const ArraySchema& schema, std::string_view text);
  /// Checks ranges against the schema (unknown attribute or float bound on an
  /// integer attribute: schema error).
  void validate(const ArraySchema& schema) const;
  bool trivial() const { return ranges.empty() && residual.empty(); }
  std::string to_string() const;
};

// Chunk-parallel operators over in-memory arrays. Each worker processes its own
// chunks one at a time; output chunks keep the input placement.

/// Translates every chunk box (metadata only). Overflow: domain error.
Array shift(const Array& in, std::span<const std::int64_t> offset);

enum class ReboxMode { clip, extend };

/// clip: keeps the valid cells inside `box`; chunks outside are dropped.
/// extend: `box` must contain the current array box (else mode error).
Array rebox(const Array& in, const Box& box, ReboxMode mode = ReboxMode::clip);

/// Clip directly from storage: only chunks that survive pruning are read.
Array rebox(const Catalog& catalog, const std::string& array, const Box& box, const ScanOptions& options = {});

/// Invalidates cells failing `p`. Chunks excluded by attribute zones are not
/// inspected: dense ones become all-invalid, sparse ones are dropped.
Array filter(const Array& in, const Predicate& p, Diagnostics* diag = nullptr);

/// Makes every cell of each chunk box valid, defaulting previously invalid
/// cells. Output chunks are dense. Missing default: config error.
Array fill(const Array& in, const std::map<std::string, CellValue>& defaults);

/// Adds (or replaces) attribute `name` = f(attributes) on valid cells.
/// Arithmetic faults invalidate the cell and are counted in `diag`.
Array apply(const Array& in, const std::string& name, const Expr& f, Diagnostics* diag = nullptr);

/// Cell-wise g(a, b) for each attribute pair in schema order; `g` reads
/// variables `a` and `b`. Valid where both inputs are valid. Boxes and chunking
/// must match (shape error).
Array combine(const Array& a, const Array& b, const Expr& g, Diagnostics* diag = nullptr);

/// Dimension join of aligned arrays: attributes of `a` then `b` (clashing names
/// from `b` get a `_2` suffix). Non-aligned chunking: unsupported error.
Array inner_djoin(const Array& a, const Array& b);

/// Groups valid cells by `keep_dims` and aggregates. Executed as a GLA.
Table reduce(const Array& in, const std::vector<std::string>& keep_dims, const std::vector<AggSpec>& aggs,
             const GlaOptions& options = {}, GlaStats* stats = nullptr);

/// Runs `fn` over all chunks, one worker thread per simulated worker.
/// Results keep the input order; nullopt drops the chunk.
std::vector<std::optional<Chunk>> map_chunks(const Array& in,
                                             const std::function<std::optional<Chunk>(const Chunk&, int)>& fn);

/// Same array with chunks from `fn`; dropped chunks disappear with their placement.
Array transform_chunks(const Array& in, const std::function<std::optional<Chunk>(const Chunk&, int)>& fn);

/// Attribute specs of `chunk` as a variable list (names and kinds).
std::vector<std::string> attr_names(const std::vector<AttributeSpec>& attrs);
std::vector<AttrKind> attr_kinds(const std::vector<AttributeSpec>& attrs);

}  // namespace aql
