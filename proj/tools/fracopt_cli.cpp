// Experiment driver for the fractional optimal control solver.
//
//   fracopt disc-qu      benchmark sweep on quasi-uniform disc meshes
//   fracopt disc-graded  graded disc meshes, errors against N
//   fracopt lshape       L-shaped domain against a nested reference solution
//   fracopt plot         re-render plots from an existing result directory
//
// Each subcommand takes --config PATH (JSON; missing keys fall back to
// defaults), --out DIR, --threads K, and --seed INT.

#include "fracopt/experiments.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  int threads = 0;
  bool trace = false;
  unsigned seed = 0;
  bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--out", args.out_dir, "output directory");
  cmd->add_option("--threads", args.threads, "assembly worker count")->check(CLI::PositiveNumber);
  cmd->add_flag("--trace", args.trace, "stream optimizer traces as CSV");
  cmd->add_option("--seed", args.seed, "seed echoed into outputs (randomized tests only)");
}

fracopt::ExperimentConfig make_config(const CommonArgs& args, const std::string& experiment) {
  fracopt::ExperimentConfig cfg;
  if (!args.config_path.empty()) cfg = fracopt::load_config(args.config_path);
  cfg.experiment = experiment;
  if (!args.out_dir.empty()) cfg.output_dir = args.out_dir;
  if (args.threads > 0) cfg.threads = args.threads;
  if (args.trace) cfg.trace = true;
  if (args.seed_set) cfg.seed = args.seed;
  if (experiment == "disc_graded" && cfg.mu <= 1.0) cfg.mu = 2.0;
  return cfg;
}

int run(const fracopt::ExperimentConfig& cfg) {
  const fracopt::ExperimentResult result = fracopt::run_experiment(cfg);
  if (!result.all_converged) {
    std::cerr << "one or more solves failed to converge\n";
    return 1;
  }
  return 0;
}

// rebuild plots from CSVs found in a result directory
int replot(const std::string& dir) {
  namespace fs = std::filesystem;
  fracopt::ExperimentConfig cfg;
  const fs::path cfg_path = fs::path(dir) / "config.json";
  if (fs::exists(cfg_path)) cfg = fracopt::load_config(cfg_path.string());
  cfg.output_dir = dir;

  fracopt::ExperimentResult result;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".csv") continue;
    const std::string stem = entry.path().stem().string();
    if (stem.rfind("s_", 0) != 0) continue;
    std::ifstream in(entry.path());
    std::string line;
    std::getline(in, line);  // header
    fracopt::ConvergenceRecord rec;
    while (std::getline(in, line)) {
      fracopt::ConvergenceLevel lv;
      if (std::sscanf(line.c_str(), "%d,%lf,%d,%lf,%lf", &lv.level, &lv.h, &lv.N, &lv.e_energy,
                      &lv.e_l2_control) == 5)
        rec.levels.push_back(lv);
    }
    if (!rec.levels.empty()) result.records[stem] = rec;
  }
  if (result.records.empty()) {
    std::cerr << "plot: no record CSVs found in " << dir << '\n';
    return 1;
  }
  fracopt::emit_plots(cfg, result);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"finite element solver for optimal control of the integral fractional Laplacian"};
  app.require_subcommand(1);

  CommonArgs args;
  CLI::App* disc_qu = app.add_subcommand("disc-qu", "quasi-uniform disc benchmark sweep");
  CLI::App* disc_graded = app.add_subcommand("disc-graded", "graded disc study");
  CLI::App* lshape = app.add_subcommand("lshape", "L-shaped domain study");
  CLI::App* plot = app.add_subcommand("plot", "re-render plots from a result directory");
  for (CLI::App* cmd : {disc_qu, disc_graded, lshape}) add_common(cmd, args);
  std::string plot_dir = "out";
  plot->add_option("--out", plot_dir, "result directory to re-plot");

  CLI11_PARSE(app, argc, argv);
  args.seed_set = app.count_all() && (disc_qu->count("--seed") || disc_graded->count("--seed") ||
                                      lshape->count("--seed"));

  try {
    if (disc_qu->parsed()) return run(make_config(args, "disc_quasiuniform"));
    if (disc_graded->parsed()) return run(make_config(args, "disc_graded"));
    if (lshape->parsed()) return run(make_config(args, "lshape"));
    if (plot->parsed()) return replot(plot_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
