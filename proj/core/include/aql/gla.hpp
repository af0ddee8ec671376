#pragma once

#include <atomic>
#include <exception>
#include <mutex>
#include <optional>
#include <thread>
#include <type_traits>
#include <variant>
#include <vector>

#include "aql/array_model.hpp"
#include "aql/bytes.hpp"
#include "aql/storage.hpp"

namespace aql {

// ---------------------------------------------------------------------------
// Aggregation trees

struct AggregationTree {
  enum class Shape { star, chain, balanced_binary };

  int root = 0;
  std::vector<int> parent;  // parent[root] == -1

  int size() const { return static_cast<int>(parent.size()); }
  /// Shape is laid out over workers relabelled so that `root` is the root.
  static AggregationTree build(Shape shape, int n_workers, int root = 0);
  /// Throws Errc::config unless the tree is connected, acyclic and single-rooted.
  void validate() const;
  /// Children before parents; root last.
  std::vector<int> post_order() const;
};

AggregationTree::Shape parse_tree_shape(std::string_view text);

struct EdgeTraffic {
  int from = 0;
  int to = 0;
  std::uint64_t bytes = 0;
};

struct GlaStats {
  std::uint64_t chunks = 0;
  std::uint64_t begin_chunk_calls = 0;
  std::uint64_t end_chunk_calls = 0;
  std::uint64_t states = 0;
  std::uint64_t local_merges = 0;
  std::vector<EdgeTraffic> edges;

  std::uint64_t traffic_bytes() const {
    std::uint64_t n = 0;
    for (const auto& e : edges) n += e.bytes;
    return n;
  }
};

struct GlaOptions {
  int states_per_worker = 2;
  std::optional<AggregationTree> tree;  // default: balanced binary rooted at 0
  bool threads = true;
};

// ---------------------------------------------------------------------------
// Contract
//
// A GLA type G provides:
//   void accumulate(const Chunk&, std::size_t row)     per valid row, or
//   void accumulate_chunk(const Chunk&)                 with kChunkAtATime = true
//   void local_merge(G&& other)
//   void serialize(ByteWriter&) const
//   void remote_merge(ByteReader&)
//   R terminate()
// and optionally
//   void begin_chunk(const Chunk&)
//   void end_chunk(const Chunk&)  or  void end_chunk(const Chunk&, std::vector<Row>&) with `using Row`
//   L local_terminate()

namespace gla_detail {

template <typename G>
struct row_of {
  using type = std::monostate;
};
template <typename G>
  requires requires { typename G::Row; }
struct row_of<G> {
  using type = typename G::Row;
};

template <typename G>
concept chunk_at_a_time = requires { G::kChunkAtATime; } && G::kChunkAtATime;

template <typename G>
concept has_begin = requires(G g, const Chunk& c) { g.begin_chunk(c); };

template <typename G>
concept has_end_rows =
    requires(G g, const Chunk& c, std::vector<typename row_of<G>::type>& rows) { g.end_chunk(c, rows); };

template <typename G>
concept has_end = requires(G g, const Chunk& c) { g.end_chunk(c); };

template <typename G>
concept has_local_terminate = requires(G g) { g.local_terminate(); };

}  // namespace gla_detail

template <typename G>
concept Gla = requires(G g, const G& cg, G&& other, ByteWriter& w, ByteReader& r) {
  g.local_merge(std::move(other));
  cg.serialize(w);
  g.remote_merge(r);
  g.terminate();
};

template <typename G>
using gla_row_t = typename gla_detail::row_of<G>::type;

template <typename G>
struct GlaRun {
  std::remove_cvref_t<decltype(std::declval<G&>().terminate())> result;
  std::vector<gla_row_t<G>> rows;  // end_chunk materializations
  GlaStats stats;
};

namespace gla_detail {

[[noreturn]] void rethrow_with_context(std::exception_ptr e, int worker, std::int64_t chunk);

template <typename G>
void process_chunk(G& g, const Chunk& c, std::vector<gla_row_t<G>>& rows) {
  if constexpr (has_begin<G>) g.begin_chunk(c);
  if constexpr (chunk_at_a_time<G>) {
    g.accumulate_chunk(c);
  } else if (c.dense()) {
    c.validity.for_each_set([&](std::size_t r) { g.accumulate(c, r); });
  } else {
    const std::size_t n = c.rows();
    for (std::size_t r = 0; r < n; ++r) g.accumulate(c, r);
  }
  if constexpr (has_end_rows<G>)
    g.end_chunk(c, rows);
  else if constexpr (has_end<G>)
    g.end_chunk(c);
}

struct Counters {
  std::atomic<std::uint64_t> begin{0};
  std::atomic<std::uint64_t> end{0};
  std::atomic<std::uint64_t> states{0};
  std::atomic<std::uint64_t> merges{0};
};

/// Folds one worker's chunks into `states_per_worker` states and local-merges them.
template <typename G, typename Factory>
G fold_worker(int worker, const std::vector<ChunkPtr>& chunks, Factory& factory, const GlaOptions& opt,
              std::vector<gla_row_t<G>>& rows, Counters& counters) {
  const std::size_t k = std::max<std::size_t>(
      1, std::min<std::size_t>(static_cast<std::size_t>(std::max(1, opt.states_per_worker)), chunks.size()));
  std::vector<std::optional<G>> states(k);
  std::vector<std::vector<gla_row_t<G>>> state_rows(k);
  for (auto& s : states) s.emplace(factory());
  counters.states += k;
  std::exception_ptr error;
  std::mutex err_mu;

  auto run_state = [&](std::size_t s) {
    for (std::size_t i = s; i < chunks.size(); i += k) {
      try {
        process_chunk(*states[s], *chunks[i], state_rows[s]);
        ++counters.begin;
        ++counters.end;
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!error) {
          try {
            rethrow_with_context(std::current_exception(), worker, chunks[i]->id);
          } catch (...) {
            error = std::current_exception();
          }
        }
        return;
      }
    }
  };
  if (opt.threads && k > 1) {
    std::vector<std::thread> ts;
    for (std::size_t s = 0; s < k; ++s) ts.emplace_back(run_state, s);
    for (auto& t : ts) t.join();
  } else {
    for (std::size_t s = 0; s < k; ++s) run_state(s);
  }
  if (error) std::rethrow_exception(error);
  for (std::size_t s = 1; s < k; ++s) {
    states[0]->local_merge(std::move(*states[s]));
    ++counters.merges;
  }
  for (auto& r : state_rows)
    for (auto& x : r) rows.push_back(std::move(x));
  return std::move(*states[0]);
}

template <typename G, typename Factory>
std::vector<G> fold_all(const Array& input, Factory& factory, const GlaOptions& opt, int n_workers,
                        std::vector<gla_row_t<G>>& rows, Counters& counters) {
  std::vector<std::vector<ChunkPtr>> per_worker(static_cast<std::size_t>(n_workers));
  for (std::size_t i = 0; i < input.chunks.size(); ++i) {
    const int w = input.worker_of(i);
    if (w < 0 || w >= n_workers) fail(Errc::config, "chunk placed on unknown worker " + std::to_string(w));
    per_worker[static_cast<std::size_t>(w)].push_back(input.chunks[i]);
  }
  std::vector<std::optional<G>> states(static_cast<std::size_t>(n_workers));
  std::vector<std::vector<gla_row_t<G>>> worker_rows(static_cast<std::size_t>(n_workers));
  std::exception_ptr error;
  std::mutex err_mu;
  auto run_worker = [&](std::size_t w) {
    try {
      states[w].emplace(fold_worker<G>(static_cast<int>(w), per_worker[w], factory, opt, worker_rows[w], counters));
    } catch (...) {
      std::lock_guard lock(err_mu);
      if (!error) error = std::current_exception();
    }
  };
  if (opt.threads && n_workers > 1) {
    std::vector<std::thread> ts;
    for (std::size_t w = 0; w < per_worker.size(); ++w) ts.emplace_back(run_worker, w);
    for (auto& t : ts) t.join();
  } else {
    for (std::size_t w = 0; w < per_worker.size(); ++w) run_worker(w);
  }
  if (error) std::rethrow_exception(error);
  std::vector<G> out;
  out.reserve(states.size());
  for (std::size_t w = 0; w < states.size(); ++w) {
    out.push_back(std::move(*states[w]));
    for (auto& r : worker_rows[w]) rows.push_back(std::move(r));
  }
  return out;
}

/// Moves worker states up the tree through serialized bytes; returns the root state.
template <typename G>
G ascend(std::vector<G>& states, const AggregationTree& tree, GlaStats& stats) {
  for (int w : tree.post_order()) {
    const int p = tree.parent[static_cast<std::size_t>(w)];
    if (p < 0) continue;
    ByteWriter out;
    states[static_cast<std::size_t>(w)].serialize(out);
    const auto bytes = out.take();
    ByteReader in(bytes);
    states[static_cast<std::size_t>(p)].remote_merge(in);
    if (!in.done()) fail(Errc::contract, "remote_merge left unread bytes");
    stats.edges.push_back({w, p, bytes.size()});
  }
  return std::move(states[static_cast<std::size_t>(tree.root)]);
}

}  // namespace gla_detail

/// GLA metaoperator over an in-memory array: per-worker folding (several
/// states per worker, local_merge), then serialize/remote_merge up the tree
/// and terminate at the root.
template <Gla G, typename Factory>
GlaRun<G> run_gla(const Array& input, Factory&& factory, const GlaOptions& opt = {}) {
  const AggregationTree tree =
      opt.tree ? *opt.tree : AggregationTree::build(AggregationTree::Shape::balanced_binary, input.n_workers);
  tree.validate();
  if (tree.size() != input.n_workers)
    fail(Errc::config, "aggregation tree covers " + std::to_string(tree.size()) + " workers, array uses " +
                           std::to_string(input.n_workers));
  gla_detail::Counters counters;
  std::vector<gla_row_t<G>> rows;
  auto states = gla_detail::fold_all<G>(input, factory, opt, input.n_workers, rows, counters);
  GlaStats stats;
  G root = gla_detail::ascend(states, tree, stats);
  stats.chunks = input.chunks.size();
  stats.begin_chunk_calls = counters.begin;
  stats.end_chunk_calls = counters.end;
  stats.states = counters.states;
  stats.local_merges = counters.merges;
  return GlaRun<G>{root.terminate(), std::move(rows), std::move(stats)};
}

/// Streams chunks from storage into the metaoperator.
template <Gla G, typename Factory>
GlaRun<G> run_gla(const Catalog& catalog, const std::string& array, std::span<const std::int64_t> chunk_ids,
                  Factory&& factory, const GlaOptions& opt = {}, const ScanOptions& scan_opt = {}) {
  const int n_workers = scan_opt.n_workers.value_or(catalog.entry(array).n_workers);
  Array a;
  a.schema = catalog.entry(array).schema;
  a.n_workers = n_workers;
  std::mutex mu;
  ScanOptions so = scan_opt;
  so.n_workers = n_workers;
  std::vector<std::pair<ChunkPtr, int>> got;
  scan(catalog, array, chunk_ids, [&](const ChunkPtr& c, int w) {
    std::lock_guard lock(mu);
    got.emplace_back(c, w);
  }, so);
  std::sort(got.begin(), got.end(), [](const auto& x, const auto& y) { return x.first->id < y.first->id; });
  for (auto& [c, w] : got) {
    a.chunks.push_back(c);
    a.placement.push_back(w);
  }
  return run_gla<G>(a, std::forward<Factory>(factory), opt);
}

namespace gla_detail {
template <typename G>
struct local_result {
  using type = std::remove_cvref_t<decltype(std::declval<G&>().terminate())>;
};
template <typename G>
  requires has_local_terminate<G>
struct local_result<G> {
  using type = std::remove_cvref_t<decltype(std::declval<G&>().local_terminate())>;
};
}  // namespace gla_detail

template <typename G>
struct ConfinedResult {
  std::vector<typename gla_detail::local_result<G>::type> results;  // per worker
  std::vector<gla_row_t<G>> rows;
  GlaStats stats;
};

/// Worker-confined execution: local_terminate per worker, no cross-worker traffic.
/// Throws Errc::contract when G has no local_terminate.
template <Gla G, typename Factory>
ConfinedResult<G> run_gla_confined(const Array& input, Factory&& factory, const GlaOptions& opt = {}) {
  if constexpr (!gla_detail::has_local_terminate<G>) {
    fail(Errc::contract, "GLA does not provide local_terminate; confined execution unavailable");
  } else {
    gla_detail::Counters counters;
    ConfinedResult<G> out;
    auto states = gla_detail::fold_all<G>(input, factory, opt, input.n_workers, out.rows, counters);
    for (auto& s : states) out.results.push_back(s.local_terminate());
    out.stats.chunks = input.chunks.size();
    out.stats.begin_chunk_calls = counters.begin;
    out.stats.end_chunk_calls = counters.end;
    out.stats.states = counters.states;
    out.stats.local_merges = counters.merges;
    return out;
  }
}

}  // namespace aql
