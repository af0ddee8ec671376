// aqlbench: run the SS-DB phases or a plan script against a data directory.

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#include "aql/bench.hpp"
#include "aql/error.hpp"
#include "aql/plan.hpp"
#include "aql/storage.hpp"

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) aql::fail(aql::Errc::io, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) aql::fail(aql::Errc::io, "cannot write " + path);
  out << text;
}

int run_plan(const std::string& plan_path, const std::string& data_dir, int workers, const std::string& report) {
  const auto plan = aql::parse_plan(slurp(plan_path));
  aql::Catalog catalog(data_dir);
  const auto result = aql::execute_plan(plan, catalog, workers);
  std::vector<std::vector<std::string>> rows{{"node", "op", "seconds", "chunks_read", "bytes_read", "merge_bytes", "cells"}};
  std::string metrics;
  for (const auto& n : result.nodes) {
    char secs[32];
    std::snprintf(secs, sizeof secs, "%.4f", n.seconds);
    rows.push_back({n.id, n.op, secs, std::to_string(n.chunks_read), std::to_string(n.bytes_read),
                    std::to_string(n.merge_bytes), std::to_string(n.cells)});
    metrics += n.id + ".seconds\t" + secs + "\n";
    metrics += n.id + ".chunks_read\t" + std::to_string(n.chunks_read) + "\n";
    metrics += n.id + ".bytes_read\t" + std::to_string(n.bytes_read) + "\n";
    metrics += n.id + ".merge_bytes\t" + std::to_string(n.merge_bytes) + "\n";
    metrics += n.id + ".cells\t" + std::to_string(n.cells) + "\n";
  }
  metrics += "result.digest\t" + aql::hex(result.digest) + "\n";
  std::vector<std::size_t> width(rows[0].size(), 0);
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) {
      const auto pad = std::string(width[c] - r[c].size(), ' ');
      std::cout << (c == 0 ? "" : "  ") << (c < 2 ? r[c] + pad : pad + r[c]);
    }
    std::cout << "\n";
  }
  if (const auto* t = std::get_if<aql::Table>(&result.value))
    std::cout << "\n" << t->to_string() << "\n";
  else
    std::cout << "\nresult array: " << std::get<aql::Array>(result.value).valid_cells() << " valid cells\n";
  std::cout << "digest " << aql::hex(result.digest) << "\n";
  if (!report.empty()) write_file(report, metrics);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Array engine benchmark driver"};
  std::string config_path, data_dir = "aql_data", phases = "all", plan_path, report;
  std::optional<int> workers;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
  app.add_option("--config", config_path, "flat key = value config file")->check(CLI::ExistingFile);
  app.add_option("--data-dir", data_dir, "catalog directory")->capture_default_str();
  app.add_option("--workers", workers, "worker count")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "generator and parameter seed");
  app.add_option("--phases", phases, "load,cook,group,q1..q9, 'queries' or 'all'")->capture_default_str();
  app.add_option("--plan", plan_path, "execute a plan script instead of the benchmark")->check(CLI::ExistingFile);
  app.add_option("--report", report, "write metric<TAB>value lines here");
  app.add_option("--set", sets, "extra key=value setting (repeatable)");
  CLI11_PARSE(app, argc, argv);

  try {
    auto cfg = config_path.empty() ? aql::ssdb::BenchConfig::desk() : aql::load_config(config_path);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) aql::fail(aql::Errc::config, "--set expects key=value, got '" + s + "'");
      aql::apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
    }
    if (workers) cfg.n_workers = *workers;
    if (seed) cfg.seed = *seed;

    if (!plan_path.empty()) return run_plan(plan_path, data_dir, cfg.n_workers, report);

    const auto rep = aql::run_benchmark(cfg, data_dir, aql::parse_phases(phases));
    std::cout << rep.to_table();
    if (!report.empty()) write_file(report, rep.to_metrics());
  } catch (const std::exception& e) {
    std::cerr << "aqlbench: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
