#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "aql/bench.hpp"
#include "aql/error.hpp"

namespace aql {

namespace {

using ssdb::BenchConfig;

std::int64_t parse_int(std::string_view v, std::string_view key) {
  std::int64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    fail(Errc::parse, "setting '" + std::string(key) + "' expects an integer, got '" + std::string(v) + "'");
  return out;
}

double parse_double(std::string_view v, std::string_view key) {
  double out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    fail(Errc::parse, "setting '" + std::string(key) + "' expects a number, got '" + std::string(v) + "'");
  return out;
}

struct Field {
  std::function<void(BenchConfig&, std::string_view, std::string_view)> set;
  std::function<std::string(const BenchConfig&)> get;
};

template <typename T>
Field int_field(T BenchConfig::*m) {
  return {[m](BenchConfig& c, std::string_view k, std::string_view v) { c.*m = static_cast<T>(parse_int(v, k)); },
          [m](const BenchConfig& c) { return std::to_string(c.*m); }};
}

template <typename T>
Field query_int(T ssdb::QueryParams::*m) {
  return {[m](BenchConfig& c, std::string_view k, std::string_view v) { c.query.*m = static_cast<T>(parse_int(v, k)); },
          [m](const BenchConfig& c) { return std::to_string(c.query.*m); }};
}

Field real_field(double BenchConfig::*m) {
  return {[m](BenchConfig& c, std::string_view k, std::string_view v) { c.*m = parse_double(v, k); },
          [m](const BenchConfig& c) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.17g", c.*m);
            return std::string(buf);
          }};
}

const std::map<std::string, Field, std::less<>>& fields() {
  static const std::map<std::string, Field, std::less<>> f{
      {"n_images", int_field(&BenchConfig::n_images)},
      {"cycle_size", int_field(&BenchConfig::cycle_size)},
      {"grid_extent", int_field(&BenchConfig::grid_extent)},
      {"domain_extent", int_field(&BenchConfig::domain_extent)},
      {"chunk_side", int_field(&BenchConfig::chunk_side)},
      {"workers", int_field(&BenchConfig::n_workers)},
      {"seed", int_field(&BenchConfig::seed)},
      {"cook_threshold", int_field(&BenchConfig::cook_threshold)},
      {"objects_per_grid", int_field(&BenchConfig::objects_per_grid)},
      {"object_max_radius", real_field(&BenchConfig::object_max_radius)},
      {"object_max_drift", real_field(&BenchConfig::object_max_drift)},
      {"obs_max_bbox", int_field(&BenchConfig::obs_max_bbox)},
      {"obs_max_poly_edges", int_field(&BenchConfig::obs_max_poly_edges)},
      {"group_radius", real_field(&BenchConfig::group_radius)},
      {"group_time_weight", real_field(&BenchConfig::group_time_weight)},
      {"param_sets", int_field(&BenchConfig::param_sets)},
      {"repetitions", int_field(&BenchConfig::repetitions)},
      {"x1", query_int(&ssdb::QueryParams::x1)},
      {"y1", query_int(&ssdb::QueryParams::y1)},
      {"t1", query_int(&ssdb::QueryParams::t1)},
      {"u1", query_int(&ssdb::QueryParams::u1)},
      {"x2", query_int(&ssdb::QueryParams::x2)},
      {"y2", query_int(&ssdb::QueryParams::y2)},
      {"t2", query_int(&ssdb::QueryParams::t2)},
      {"u2", query_int(&ssdb::QueryParams::u2)},
      {"t3", query_int(&ssdb::QueryParams::t3)},
      {"u3", query_int(&ssdb::QueryParams::u3)},
      {"d4", query_int(&ssdb::QueryParams::d4)},
      {"d5", query_int(&ssdb::QueryParams::d5)},
      {"d6", query_int(&ssdb::QueryParams::d6)},
      {"vi", query_int(&ssdb::QueryParams::vi)},
      {"oi", query_int(&ssdb::QueryParams::oi)},
      {"recook_threshold", query_int(&ssdb::QueryParams::recook_threshold)},
  };
  return f;
}

std::string_view strip(std::string_view s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string_view::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

void apply_setting(BenchConfig& cfg, std::string_view key, std::string_view value) {
  const auto& f = fields();
  auto it = f.find(key);
  if (it == f.end()) fail(Errc::config, "unknown setting '" + std::string(key) + "'");
  it->second.set(cfg, key, value);
}

BenchConfig parse_config(std::string_view text, BenchConfig base) {
  int line = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
    ++line;
    if (auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    raw = strip(raw);
    if (raw.empty()) continue;
    const auto eq = raw.find('=');
    if (eq == std::string_view::npos)
      fail(Errc::parse, "config line " + std::to_string(line) + ": expected 'key = value'");
    try {
      apply_setting(base, strip(raw.substr(0, eq)), strip(raw.substr(eq + 1)));
    } catch (const Error& e) {
      throw Error(e.code(), "config line " + std::to_string(line) + ": " + e.what());
    }
  }
  return base;
}

BenchConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_config_text(const BenchConfig& cfg) {
  std::string out;
  for (const auto& [k, f] : fields()) out += k + " = " + f.get(cfg) + "\n";
  return out;
}

}  // namespace aql
