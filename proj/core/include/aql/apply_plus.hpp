#pragma once

#include <string>
#include <vector>

#include "aql/aggregate.hpp"
#include "aql/array_model.hpp"
#include "aql/gla.hpp"

namespace aql {

/// Stencil extent per dimension as offsets from the origin cell, e.g.
/// {[-1,1],[-1,1]} for 3x3. One-sided shapes such as [0, D-1] are allowed.
struct NeighborhoodShape {
  std::vector<Range> offsets;

  static NeighborhoodShape cube(std::size_t dims, std::int64_t radius);
  std::string to_string() const;
};

enum class Boundary { merge, overlap };

struct ApplyPlusSpec {
  NeighborhoodShape shape;
  /// One repeating 0/1 string per dimension, anchored at the dimension's lower
  /// bound. Empty selects every valid cell as an origin.
  std::vector<std::string> patterns;
  std::vector<AggSpec> aggs;
  Boundary boundary = Boundary::merge;
  /// Pattern mode: cut each window before the next origin along every dimension.
  bool clip_to_next_origin = false;
};

struct ApplyPlusStats {
  GlaStats gla;
  std::uint64_t local_origins = 0;   // finished inside one chunk
  std::uint64_t border_states = 0;   // partial states after the final merge
  std::uint64_t halo_cells = 0;      // overlap mode: replicated cells
};

/// Generalized neighborhood aggregation.
///
/// Every-valid-cell origins: the output mirrors the input chunking, one cell per
/// valid input cell. Pattern origins: cells where every dimension's pattern
/// reads '1'; the outputs are concatenated in input order into one dense chunk
/// with box [0 : count_d - 1] per dimension.
///
/// Cells outside the array count as invalid. An output cell is valid when every
/// aggregate is defined (count kinds always are, the rest need one valid input).
/// Errors: empty or all-zero pattern (config), shape wider than the array (domain).
Array apply_plus(const Array& in, const ApplyPlusSpec& spec, const GlaOptions& options = {},
                 ApplyPlusStats* stats = nullptr);

/// Number of origins a pattern selects in [lo, hi] when anchored at `lo`.
std::int64_t pattern_origin_count(std::string_view pattern, std::int64_t extent);

}  // namespace aql
