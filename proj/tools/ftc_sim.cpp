// Command-line front end: run one scenario, compare filters on a scenario, or sweep the grid.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include "ftc/harness.hpp"

namespace fs = std::filesystem;
using namespace ftc;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;

// Options that mirror config keys; only those given on the command line override the file.
struct RunOptions {
  std::string config;
  std::map<std::string, std::string> given;
};

void add_key(CLI::App* app, RunOptions& opts, const std::string& flag, const std::string& key,
             const std::string& help) {
  app->add_option_function<std::string>(
      flag, [&opts, key](const std::string& value) { opts.given[key] = value; }, help);
}

ScenarioConfig resolve(const RunOptions& opts, std::string* out) {
  std::map<std::string, std::string> values;
  if (!opts.config.empty()) values = read_config_file(opts.config);
  for (const auto& [key, value] : opts.given) values[key] = value;
  ScenarioConfig cfg;
  apply_config(values, cfg, out);
  cfg.validate();
  return cfg;
}

std::string describe(const SimLog& log) {
  std::map<std::string, int> counts;
  for (const auto& row : log.rows) {
    if (row.solver_status != "ok") ++counts[row.solver_status];
  }
  std::string text;
  for (const auto& [status, n] : counts) text += " " + status + "=" + std::to_string(n);
  return text.empty() ? " all ok" : text;
}

SimLog run_logged(const ScenarioConfig& cfg) {
  std::cerr << "scenario " << cfg.scenario << " " << cfg.label() << " feedback "
            << (cfg.feedback ? "on" : "off") << " " << to_string(cfg.controller) << " seed "
            << cfg.seed << " ...";
  SimLog log = run_scenario(cfg);
  std::cerr << describe(log) << "\n";
  return log;
}

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

void write_table(const ComparisonTable& table, const fs::path& dir) {
  std::ofstream summary = open_output(dir / "summary.csv");
  std::ofstream series = open_output(dir / "radius_errors.csv");
  write_comparison(table, summary, series);
  if (!summary || !series) throw IoError("failed writing comparison tables in '" + dir.string() + "'");
}

std::string run_name(const ScenarioConfig& cfg) {
  return "s" + std::to_string(cfg.scenario) + "_" + cfg.label() + "_" +
         (cfg.feedback ? "fb-on" : "fb-off") + "_" + std::string(to_string(cfg.controller)) + ".csv";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fault-tolerant control simulator for a differential-drive robot"};
  app.require_subcommand(1);

  RunOptions run_opts;
  auto* run = app.add_subcommand("run", "Run one scenario and write its CSV log");
  run->add_option("--config", run_opts.config, "key=value run description; flags override it");
  add_key(run, run_opts, "--scenario", "scenario", "Scenario 1-4");
  add_key(run, run_opts, "--filter", "filter", "ekf | ukf | imm-ekf | imm-ukf");
  add_key(run, run_opts, "--modes", "modes", "IMM mode count, 4 or 5");
  add_key(run, run_opts, "--feedback", "feedback", "on | off");
  add_key(run, run_opts, "--controller", "controller", "nmpc | lmpc");
  add_key(run, run_opts, "--nodes", "nodes", "Collocation polynomial degree");
  add_key(run, run_opts, "--seed", "seed", "Noise seed");
  add_key(run, run_opts, "--duration", "duration", "Run length in seconds (scenario default if unset)");
  add_key(run, run_opts, "--out", "out", "Output CSV path");

  RunOptions cmp_opts;
  std::string cmp_dir;
  auto* compare = app.add_subcommand("compare", "Run every filter on one scenario and tabulate");
  compare->add_option("--config", cmp_opts.config, "key=value run description; flags override it");
  add_key(compare, cmp_opts, "--scenario", "scenario", "Scenario 1-4");
  add_key(compare, cmp_opts, "--seed", "seed", "Noise seed");
  add_key(compare, cmp_opts, "--nodes", "nodes", "Collocation polynomial degree");
  compare->add_option("--out", cmp_dir, "Output directory")->required();

  RunOptions sweep_opts;
  std::string sweep_dir = "sweep";
  auto* sweep = app.add_subcommand("sweep", "Run the full scenario grid");
  sweep->add_option("--config", sweep_opts.config, "key=value run description; flags override it");
  add_key(sweep, sweep_opts, "--seed", "seed", "Noise seed");
  add_key(sweep, sweep_opts, "--nodes", "nodes", "Collocation polynomial degree");
  sweep->add_option("--out", sweep_dir, "Output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*run) {
      std::string out;
      const ScenarioConfig cfg = resolve(run_opts, &out);
      if (out.empty()) throw ConfigError("an output path is required (--out or 'out' in the config)");
      export_csv(run_logged(cfg), out);
      std::cerr << "wrote " << out << "\n";
    } else if (*compare) {
      const ScenarioConfig base = resolve(cmp_opts, nullptr);
      ensure_directory(cmp_dir);
      std::vector<SimLog> logs;
      for (ScenarioConfig cfg : comparison_configs(base.scenario, base.seed)) {
        cfg.nodes = base.nodes;
        logs.push_back(run_logged(cfg));
        export_csv(logs.back(), fs::path(cmp_dir) / run_name(cfg));
      }
      write_table(compare_runs(logs), cmp_dir);
      std::cerr << "wrote " << logs.size() << " runs and comparison tables to " << cmp_dir << "\n";
    } else if (*sweep) {
      const ScenarioConfig base = resolve(sweep_opts, nullptr);
      ensure_directory(sweep_dir);
      std::map<int, std::vector<SimLog>> by_scenario;
      for (ScenarioConfig cfg : sweep_configs(base.seed)) {
        cfg.nodes = base.nodes;
        SimLog log = run_logged(cfg);
        export_csv(log, fs::path(sweep_dir) / run_name(cfg));
        if (cfg.feedback && cfg.controller == ControllerKind::nmpc) {
          by_scenario[cfg.scenario].push_back(std::move(log));
        }
      }
      for (const auto& [scenario, logs] : by_scenario) {
        const fs::path dir = fs::path(sweep_dir) / ("s" + std::to_string(scenario) + "_compare");
        ensure_directory(dir);
        write_table(compare_runs(logs), dir);
      }
      std::cerr << "sweep written to " << sweep_dir << "\n";
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return 0;
}
