#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fedidm/config.hpp"
#include "fedidm/driver.hpp"

int main(int argc, char** argv) {
  CLI::App app{"deterministic federated condensation lab"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  int jobs = 1;
  CLI::App* run = app.add_subcommand("run", "run an experiment grid from a json config");
  run->add_option("config", config_path, "path to the config file")->required();
  run->add_option("--set", overrides, "override a field, dotted.path=value (repeatable)");
  run->add_option("--jobs", jobs, "cells to run in parallel")->check(CLI::PositiveNumber);

  std::string report_dir;
  CLI::App* report = app.add_subcommand("report", "tabulate final error rates of a finished grid");
  report->add_option("dir", report_dir, "output directory of a previous run")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // keep --help at 0, usage mistakes at 2
  }

  try {
    if (run->parsed()) {
      nlohmann::json raw = fedidm::load_json_file(config_path);
      for (const std::string& assignment : overrides) fedidm::apply_override(raw, assignment);
      const fedidm::ExperimentConfig cfg = fedidm::config_from_json(raw);
      fedidm::run_grid(cfg, jobs);
    } else {
      const std::string table = fedidm::report_table(report_dir);
      std::fputs(table.c_str(), stdout);
    }
  } catch (const fedidm::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
