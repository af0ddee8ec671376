#include <cstdio>

#include "aql/bench.hpp"

namespace aql {

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t finalize(std::uint64_t x) {
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdULL;
  x ^= x >> 33;
  x *= 0xc4ceb9fe1a85ec53ULL;
  return x ^ (x >> 33);
}

void put(std::string& s, const CellValue& v) {
  char buf[40];
  if (v.is_int())
    std::snprintf(buf, sizeof buf, "i%lld|", static_cast<long long>(v.as_int()));
  else
    std::snprintf(buf, sizeof buf, "f%.12g|", v.as_double() == 0.0 ? 0.0 : v.as_double());
  s += buf;
}

void put(std::string& s, std::int64_t v) { put(s, CellValue(v)); }

}  // namespace

std::uint64_t digest(const Table& table) {
  std::uint64_t sum = 0;
  std::string row;
  for (const auto& r : table.rows) {
    row.clear();
    for (auto k : r.key.values()) put(row, k);
    row += "#";
    for (const auto& v : r.values) put(row, v);
    sum += finalize(fnv1a(row));
  }
  return finalize(sum ^ table.rows.size());
}

std::uint64_t digest(const Array& array) {
  std::uint64_t sum = 0, n = 0;
  std::string row;
  for (const auto& c : array.chunks) {
    for (std::size_t r = 0, m = c->rows(); r < m; ++r) {
      if (!c->valid(r)) continue;
      row.clear();
      for (std::size_t d = 0; d < c->dims(); ++d) put(row, c->coord(r, d));
      row += "#";
      for (std::size_t k = 0; k < c->attrs.size(); ++k) put(row, c->value(k, r));
      sum += finalize(fnv1a(row));
      ++n;
    }
  }
  return finalize(sum ^ n);
}

std::string hex(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace aql
