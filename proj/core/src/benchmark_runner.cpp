#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>

#include "aql/bench.hpp"
#include "aql/error.hpp"
#include "aql/storage.hpp"

namespace aql {

namespace {

constexpr std::array<std::string_view, 12> kPhaseNames{"load", "cook", "group", "q1", "q2", "q3",
                                                       "q4",   "q5",   "q6",    "q7", "q8", "q9"};

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Which phase produces the data a phase reads, and the arrays that stand for it on disk.
struct Need {
  Phase producer;
  std::vector<std::string> arrays;
};

std::optional<Need> prerequisite(Phase p) {
  using namespace ssdb;
  switch (p) {
    case Phase::load:
      return std::nullopt;
    case Phase::cook:
    case Phase::q1:
    case Phase::q2:
    case Phase::q3:
      return Need{Phase::load, {kImages, kImageOrigin}};
    case Phase::group:
    case Phase::q4:
    case Phase::q5:
    case Phase::q6:
      return Need{Phase::cook, {kObs, kObsCenter}};
    default:
      return Need{Phase::group, {kGroupCenter, kGroupCenterImg}};
  }
}

std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
  h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  return h;
}

struct IoMark {
  const IoStats& io;
  std::uint64_t cr = io.chunks_read, br = io.bytes_read, cw = io.chunks_written, bw = io.bytes_written;

  void into(StageReport& s) const {
    s.chunks_read = io.chunks_read - cr;
    s.bytes_read = io.bytes_read - br;
    s.chunks_written = io.chunks_written - cw;
    s.bytes_written = io.bytes_written - bw;
  }
};

StageReport run_query_stage(const Catalog& catalog, const ssdb::BenchConfig& cfg, int q) {
  StageReport s;
  s.stage = std::string(kPhaseNames[static_cast<std::size_t>(q) + 2]);
  std::uint64_t dig = 0;
  std::uint64_t expected = 0;
  bool has_expected = false;
  for (int set = 0; set < cfg.param_sets; ++set) {
    ssdb::QueryContext ctx{catalog, cfg, ssdb::random_params(cfg, mix(cfg.seed, static_cast<std::uint64_t>(set))),
                           cfg.n_workers};
    double total = 0;
    std::optional<std::uint64_t> first;
    for (int rep = 0; rep < cfg.repetitions; ++rep) {
      const auto t0 = Clock::now();
      const auto r = ssdb::run_query(q, ctx);
      total += since(t0);
      const auto d = digest(r.table);
      if (r.expected_chunks && r.chunks_read > *r.expected_chunks)
        fail(Errc::internal, s.stage + " read " + std::to_string(r.chunks_read) + " chunks, pruning allows " +
                                 std::to_string(*r.expected_chunks));
      if (!first) {
        first = d;
        s.chunks_read += r.chunks_read;
        s.bytes_read += r.bytes_read;
        s.merge_bytes += r.merge_bytes;
        s.rows += r.table.size();
        if (r.expected_chunks) {
          has_expected = true;
          expected += *r.expected_chunks;
        }
      } else if (*first != d) {
        fail(Errc::internal, s.stage + " digest changed between repetitions of parameter set " + std::to_string(set));
      }
    }
    s.seconds += total / static_cast<double>(std::max<std::int64_t>(1, cfg.repetitions));
    dig = mix(dig, *first);
  }
  if (has_expected) s.expected_chunks = expected;
  s.digest = dig;
  return s;
}

}  // namespace

std::string_view to_string(Phase p) { return kPhaseNames[static_cast<std::size_t>(p)]; }

Phase parse_phase(std::string_view text) {
  for (std::size_t i = 0; i < kPhaseNames.size(); ++i)
    if (kPhaseNames[i] == text) return static_cast<Phase>(i);
  fail(Errc::config, "unknown phase '" + std::string(text) + "'");
}

std::set<Phase> parse_phases(std::string_view text) {
  std::set<Phase> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto k = text.find(',', pos);
    auto item = text.substr(pos, k == std::string_view::npos ? std::string_view::npos : k - pos);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (item == "all") {
      for (std::size_t i = 0; i < kPhaseNames.size(); ++i) out.insert(static_cast<Phase>(i));
    } else if (item == "queries") {
      for (std::size_t i = 3; i < kPhaseNames.size(); ++i) out.insert(static_cast<Phase>(i));
    } else if (!item.empty()) {
      out.insert(parse_phase(item));
    }
    if (k == std::string_view::npos) break;
    pos = k + 1;
  }
  if (out.empty()) fail(Errc::config, "no phases selected");
  return out;
}

const StageReport* RunReport::find(std::string_view stage) const {
  for (const auto& s : stages)
    if (s.stage == stage) return &s;
  return nullptr;
}

std::string RunReport::to_table() const {
  const std::vector<std::string> head{"stage",  "seconds",     "chunks_read", "expected", "bytes_read",
                                      "chunks_written", "bytes_written", "merge_bytes", "rows", "digest"};
  std::vector<std::vector<std::string>> cells{head};
  for (const auto& s : stages) {
    char secs[32];
    std::snprintf(secs, sizeof secs, "%.4f", s.seconds);
    cells.push_back({s.stage, secs, std::to_string(s.chunks_read),
                     s.expected_chunks ? std::to_string(*s.expected_chunks) : "-", std::to_string(s.bytes_read),
                     std::to_string(s.chunks_written), std::to_string(s.bytes_written), std::to_string(s.merge_bytes),
                     std::to_string(s.rows), s.digest ? hex(*s.digest) : "-"});
  }
  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& row : cells)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::string out;
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      const auto pad = std::string(width[c] - row[c].size(), ' ');
      out += c == 0 ? row[c] + pad : "  " + pad + row[c];
    }
    out += '\n';
  }
  return out;
}

std::string RunReport::to_metrics() const {
  std::string out;
  auto line = [&](const std::string& stage, const char* key, const std::string& v) {
    out += stage + "." + key + "\t" + v + "\n";
  };
  for (const auto& s : stages) {
    char secs[32];
    std::snprintf(secs, sizeof secs, "%.6f", s.seconds);
    line(s.stage, "seconds", secs);
    line(s.stage, "chunks_read", std::to_string(s.chunks_read));
    if (s.expected_chunks) line(s.stage, "expected_chunks", std::to_string(*s.expected_chunks));
    line(s.stage, "bytes_read", std::to_string(s.bytes_read));
    line(s.stage, "chunks_written", std::to_string(s.chunks_written));
    line(s.stage, "bytes_written", std::to_string(s.bytes_written));
    line(s.stage, "merge_bytes", std::to_string(s.merge_bytes));
    line(s.stage, "rows", std::to_string(s.rows));
    if (s.digest) line(s.stage, "digest", hex(*s.digest));
  }
  return out;
}

RunReport run_benchmark(const ssdb::BenchConfig& cfg, const std::filesystem::path& data_dir,
                        const std::set<Phase>& phases) {
  cfg.validate();
  Catalog catalog(data_dir);
  for (Phase p : phases) {
    const auto need = prerequisite(p);
    if (!need || phases.count(need->producer)) continue;
    for (const auto& a : need->arrays)
      if (!catalog.has(a))
        fail(Errc::dependency, std::string(to_string(p)) + " needs phase '" + std::string(to_string(need->producer)) +
                                   "' (array '" + a + "' is missing)");
  }

  RunReport report;
  for (Phase p : phases) {  // std::set keeps enum order
    StageReport s;
    s.stage = std::string(to_string(p));
    const IoMark mark{catalog.io()};
    const auto t0 = Clock::now();
    if (p == Phase::load) {
      const auto st = ssdb::generate(catalog, cfg);
      s.seconds = since(t0);
      mark.into(s);
      s.rows = static_cast<std::uint64_t>(cfg.n_images) * cfg.cells_per_image();
      if (s.chunks_written != st.chunks) fail(Errc::internal, "load chunk count disagrees with the generator");
    } else if (p == Phase::cook) {
      const auto st = ssdb::cook(catalog, cfg);
      s.seconds = since(t0);
      mark.into(s);
      s.merge_bytes = st.merge_bytes;
      s.rows = st.labels - st.dropped;
    } else if (p == Phase::group) {
      const auto st = ssdb::group(catalog, cfg);
      s.seconds = since(t0);
      mark.into(s);
      s.merge_bytes = st.merge_bytes;
      s.rows = st.groups;
    } else {
      s = run_query_stage(catalog, cfg, static_cast<int>(p) - 2);
    }
    report.stages.push_back(std::move(s));
  }
  return report;
}

}  // namespace aql
