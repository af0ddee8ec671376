#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "aql/aggregate.hpp"
#include "aql/array_model.hpp"
#include "aql/ssdb.hpp"

namespace aql {

// --- configuration ----------------------------------------------------------

/// Sets one `key = value` setting. Unknown key: config error; bad number: parse error.
void apply_setting(ssdb::BenchConfig& cfg, std::string_view key, std::string_view value);

/// Flat `key = value` text, `#` comments. Errors carry the line number.
ssdb::BenchConfig parse_config(std::string_view text, ssdb::BenchConfig base = ssdb::BenchConfig::desk());
ssdb::BenchConfig load_config(const std::filesystem::path& path);
std::string to_config_text(const ssdb::BenchConfig& cfg);

// --- digests ----------------------------------------------------------------

/// Order-independent 64-bit hash of the rows; floats rounded to 12 significant digits.
std::uint64_t digest(const Table& table);
/// Same over the valid cells (coordinates plus values).
std::uint64_t digest(const Array& array);
std::string hex(std::uint64_t v);

// --- benchmark --------------------------------------------------------------

enum class Phase { load, cook, group, q1, q2, q3, q4, q5, q6, q7, q8, q9 };

std::string_view to_string(Phase p);
Phase parse_phase(std::string_view text);
/// Comma-separated list; "all" selects every phase, "queries" selects q1..q9.
std::set<Phase> parse_phases(std::string_view text);

struct StageReport {
  std::string stage;
  double seconds = 0;  // load/cook/group: wall time; queries: sum over parameter sets of the mean repetition time
  std::uint64_t chunks_read = 0;
  std::uint64_t bytes_read = 0;
  std::uint64_t chunks_written = 0;
  std::uint64_t bytes_written = 0;
  std::uint64_t merge_bytes = 0;
  std::optional<std::uint64_t> expected_chunks;
  std::uint64_t rows = 0;
  std::optional<std::uint64_t> digest;
};

struct RunReport {
  std::vector<StageReport> stages;

  const StageReport* find(std::string_view stage) const;
  /// Aligned text table.
  std::string to_table() const;
  /// One `metric<TAB>value` line per metric.
  std::string to_metrics() const;
};

/// Runs the phases in order over `data_dir`. Each query runs `param_sets`
/// seeded parameter configurations `repetitions` times. Errors: a phase whose
/// input is neither on disk nor requested (dependency, naming the phase);
/// differing digests across repetitions or chunk reads above the pruning
/// count (internal).
RunReport run_benchmark(const ssdb::BenchConfig& cfg, const std::filesystem::path& data_dir,
                        const std::set<Phase>& phases);

}  // namespace aql
