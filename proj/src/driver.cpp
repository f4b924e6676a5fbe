#include "fedidm/driver.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

namespace fs = std::filesystem;

namespace fedidm {

namespace {

using nlohmann::json;

json cell_summary(const ExperimentConfig& cfg, const CellSpec& cell, const ExperimentResult& res) {
  // the echo is itself a valid config that reruns exactly this cell
  ExperimentConfig echo = cfg;
  echo.base = cell_config(cfg, cell);
  echo.aggregators = {cell.aggregator};
  echo.attacks = {cell.attack};
  echo.seeds = {cell.seed};

  int skipped = 0;
  for (const RoundRecord& r : res.rounds)
    if (r.skipped) ++skipped;

  json s;
  s["config"] = config_to_json(echo);
  s["aggregator"] = cell.aggregator;
  s["attack"] = cell.attack;
  s["seed"] = cell.seed;
  s["final_ter"] = res.metrics.final_ter;
  s["ter_series"] = res.metrics.ter_series;
  s["rsr"] = res.metrics.rsr ? json(*res.metrics.rsr) : json(nullptr);
  s["fnr"] = res.metrics.fnr ? json(*res.metrics.fnr) : json(nullptr);
  s["fpr"] = res.metrics.fpr ? json(*res.metrics.fpr) : json(nullptr);
  s["skipped_rounds"] = skipped;
  return s;
}

void run_cell(const ExperimentConfig& cfg, const CellSpec& cell) {
  const SimConfig sc = cell_config(cfg, cell);
  const ExperimentResult res = run_experiment(sc);
  const fs::path dir = fs::path(cfg.output_dir) / cell.dir_name;
  fs::create_directories(dir);
  write_file_atomic((dir / "rounds.csv").string(), res.rounds_csv);
  write_file_atomic((dir / "summary.json").string(), cell_summary(cfg, cell, res).dump(2) + "\n");
  if (!res.contributions_csv.empty())
    write_file_atomic((dir / "contributions.csv").string(), res.contributions_csv);
}

}  // namespace

std::vector<CellSpec> expand_grid(const ExperimentConfig& cfg) {
  std::vector<CellSpec> cells;
  cells.reserve(cfg.aggregators.size() * cfg.attacks.size() * cfg.seeds.size());
  for (const std::string& agg : cfg.aggregators)
    for (const std::string& atk : cfg.attacks)
      for (const std::uint64_t seed : cfg.seeds)
        cells.push_back({agg, atk, seed, agg + "_" + atk + "_s" + std::to_string(seed)});
  return cells;
}

SimConfig cell_config(const ExperimentConfig& cfg, const CellSpec& cell) {
  SimConfig sc = cfg.base;
  sc.aggregator = cell.aggregator;
  sc.attack.kind = attack_from_name(cell.attack);
  sc.seed = cell.seed;
  return sc;
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp + " for writing");
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("short write to " + tmp);
  }
  fs::rename(tmp, path);
}

void run_grid(const ExperimentConfig& cfg, int jobs) {
  const std::vector<CellSpec> cells = expand_grid(cfg);
  fs::create_directories(cfg.output_dir);

  const std::size_t workers =
      std::min<std::size_t>(std::max(jobs, 1), cells.size() == 0 ? 1 : cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::exception_ptr first;
  const auto work = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      try {
        run_cell(cfg, cells[i]);
      } catch (...) {
        const std::lock_guard<std::mutex> lock(mu);
        if (!first) first = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i + 1 < workers; ++i) pool.emplace_back(work);
    work();
    for (std::thread& th : pool) th.join();
  }
  if (first) std::rethrow_exception(first);
}

std::string report_table(const std::string& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("report directory not found: " + dir);
  std::vector<fs::path> summaries;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_directory() && fs::exists(entry.path() / "summary.json"))
      summaries.push_back(entry.path() / "summary.json");
  std::sort(summaries.begin(), summaries.end());
  if (summaries.empty()) throw ConfigError("no run summaries under " + dir);

  std::map<std::pair<std::string, std::string>, std::vector<double>> cells;
  for (const fs::path& p : summaries) {
    std::ifstream in(p);
    json s;
    try {
      in >> s;
      cells[{s.at("attack").get<std::string>(), s.at("aggregator").get<std::string>()}].push_back(
          s.at("final_ter").get<double>());
    } catch (const json::exception& e) {
      throw ConfigError("unreadable summary " + p.string() + ": " + e.what());
    }
  }

  std::vector<std::string> attacks, aggs;
  for (const std::string& name : attack_names_ordered())
    if (std::any_of(cells.begin(), cells.end(),
                    [&](const auto& kv) { return kv.first.first == name; }))
      attacks.push_back(name);
  for (const std::string& name : aggregator_names())
    if (std::any_of(cells.begin(), cells.end(),
                    [&](const auto& kv) { return kv.first.second == name; }))
      aggs.push_back(name);

  std::string out = "| attack |";
  for (const std::string& a : aggs) out += " " + a + " |";
  out += "\n|---|";
  for (std::size_t i = 0; i < aggs.size(); ++i) out += "---|";
  out += "\n";
  for (const std::string& atk : attacks) {
    out += "| " + atk + " |";
    for (const std::string& agg : aggs) {
      const auto it = cells.find({atk, agg});
      if (it == cells.end()) {
        out += " — |";
        continue;
      }
      const std::vector<double>& xs = it->second;
      double mean = 0.0;
      for (const double x : xs) mean += x;
      mean /= static_cast<double>(xs.size());
      double var = 0.0;
      for (const double x : xs) var += (x - mean) * (x - mean);
      var /= static_cast<double>(xs.size());
      char buf[64];
      std::snprintf(buf, sizeof buf, " %.2f ± %.2f |", 100.0 * mean, 100.0 * std::sqrt(var));
      out += buf;
    }
    out += "\n";
  }
  return out;
}

}  // namespace fedidm
