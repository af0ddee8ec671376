#include "aql/gla.hpp"

namespace aql {

AggregationTree AggregationTree::build(Shape shape, int n_workers, int root) {
  if (n_workers <= 0) fail(Errc::config, "aggregation tree needs at least one worker");
  if (root < 0 || root >= n_workers) fail(Errc::config, "tree root " + std::to_string(root) + " out of range");
  AggregationTree t;
  t.root = root;
  t.parent.assign(static_cast<std::size_t>(n_workers), -1);
  auto worker = [&](int label) { return (label + root) % n_workers; };
  for (int i = 1; i < n_workers; ++i) {
    int p = 0;
    switch (shape) {
      case Shape::star: p = 0; break;
      case Shape::chain: p = i - 1; break;
      case Shape::balanced_binary: p = (i - 1) / 2; break;
    }
    t.parent[static_cast<std::size_t>(worker(i))] = worker(p);
  }
  return t;
}

void AggregationTree::validate() const {
  const int n = size();
  if (n == 0) fail(Errc::config, "empty aggregation tree");
  if (root < 0 || root >= n || parent[static_cast<std::size_t>(root)] != -1)
    fail(Errc::config, "aggregation tree root is invalid");
  for (int w = 0; w < n; ++w) {
    const int p = parent[static_cast<std::size_t>(w)];
    if (w != root && (p < 0 || p >= n)) fail(Errc::config, "worker " + std::to_string(w) + " has no valid parent");
    // Walk to the root; more than n steps means a cycle.
    int cur = w;
    for (int steps = 0; cur != root; ++steps) {
      if (steps > n) fail(Errc::config, "aggregation tree contains a cycle");
      cur = parent[static_cast<std::size_t>(cur)];
      if (cur < 0) fail(Errc::config, "aggregation tree has more than one root");
    }
  }
}

std::vector<int> AggregationTree::post_order() const {
  const int n = size();
  std::vector<std::vector<int>> children(static_cast<std::size_t>(n));
  for (int w = 0; w < n; ++w)
    if (w != root) children[static_cast<std::size_t>(parent[static_cast<std::size_t>(w)])].push_back(w);
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(n));
  std::vector<std::pair<int, std::size_t>> stack{{root, 0}};
  while (!stack.empty()) {
    auto& [w, next] = stack.back();
    const auto& ch = children[static_cast<std::size_t>(w)];
    if (next < ch.size()) {
      const int c = ch[next++];
      stack.emplace_back(c, 0);
    } else {
      out.push_back(w);
      stack.pop_back();
    }
  }
  return out;
}

AggregationTree::Shape parse_tree_shape(std::string_view text) {
  if (text == "star") return AggregationTree::Shape::star;
  if (text == "chain") return AggregationTree::Shape::chain;
  if (text == "binary" || text == "balanced_binary") return AggregationTree::Shape::balanced_binary;
  fail(Errc::config, "unknown tree shape '" + std::string(text) + "'");
}

namespace gla_detail {

void rethrow_with_context(std::exception_ptr e, int worker, std::int64_t chunk) {
  const std::string where = "worker " + std::to_string(worker) + ", chunk " + std::to_string(chunk) + ": ";
  try {
    std::rethrow_exception(e);
  } catch (const Error& err) {
    // Strip the "<code> error: " prefix so the code is not repeated.
    std::string msg = err.what();
    const std::string prefix = std::string(to_string(err.code())) + " error: ";
    if (msg.rfind(prefix, 0) == 0) msg.erase(0, prefix.size());
    throw Error(err.code(), where + msg);
  } catch (const ArithmeticFault& err) {
    throw ArithmeticFault(where + err.what());
  }
}

}  // namespace gla_detail

}  // namespace aql
