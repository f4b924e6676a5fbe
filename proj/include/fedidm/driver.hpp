#pragma once

#include <string>
#include <vector>

#include "fedidm/config.hpp"

namespace fedidm {

struct CellSpec {
  std::string aggregator;
  std::string attack;  // canonical name, e.g. LIE
  std::uint64_t seed = 0;
  std::string dir_name;  // <aggregator>_<attack>_s<seed>
};

/// Aggregators outer, attacks middle, seeds inner, in config order.
std::vector<CellSpec> expand_grid(const ExperimentConfig& cfg);

/// The base simulation config with the cell's axes substituted.
SimConfig cell_config(const ExperimentConfig& cfg, const CellSpec& cell);

/// Writes via a temp file in the same directory plus rename, so readers
/// never observe a half-written file.
void write_file_atomic(const std::string& path, const std::string& content);

/// Runs every cell on `jobs` threads and writes rounds.csv, summary.json
/// and (for fedidm runs) contributions.csv under output_dir/<cell>/.
void run_grid(const ExperimentConfig& cfg, int jobs);

/// Markdown table of final TERs over the finished cells in `dir`: one row
/// per attack, one column per aggregator, each cell mean +- population std
/// over seeds in percent. Missing combinations render as an em dash.
std::string report_table(const std::string& dir);

}  // namespace fedidm
