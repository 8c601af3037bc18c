#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "fwer/errors.hpp"
#include "fwer/io.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

std::vector<fwer::MethodSpec> parse_methods(const std::string& text) {
  std::vector<fwer::MethodSpec> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(fwer::MethodSpec::parse(item));
    } catch (const std::invalid_argument& e) {
      throw fwer::ConfigError(e.what());
    }
  }
  if (out.empty()) throw fwer::ConfigError("no methods given");
  return out;
}

// Writes to the file when a path is given, otherwise to stdout.
template <class F>
void emit(const std::string& path, F&& write) {
  if (path.empty() || path == "-") {
    write(std::cout);
    return;
  }
  std::ofstream out(path);
  if (!out) throw fwer::ConfigError("cannot write " + path);
  write(out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FWER control for overlapping populations under subgroup effect heterogeneity"};
  app.require_subcommand(1);
  app.set_version_flag("--version", fwer::kVersion);

  std::string config_path, out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::optional<int> n_studies, n_runs, n_boot;
  int workers = 1;
  auto* sim = app.add_subcommand("simulate", "Run the scenario grid and write fwer.csv and power.csv");
  sim->add_option("--config", config_path, "INI grid configuration")->required();
  sim->add_option("--seed", seed, "Master seed (overrides the config)");
  sim->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
  sim->add_option("--n-studies", n_studies, "Studies per cell (overrides the config)");
  sim->add_option("--n-runs", n_runs, "Runs per study (overrides the config)");
  sim->add_option("--n-boot", n_boot, "Bootstrap replicates (overrides the config)");
  sim->add_option("--out", out_dir, "Output directory");

  std::string data_path, design_path, methods_text, analysis_out;
  double alpha = 0.025;
  int analysis_boot = 1000;
  std::uint64_t analysis_seed = 1;
  auto* ana = app.add_subcommand("analyze", "Test and bound the population effects of one dataset");
  ana->add_option("--data", data_path, "CSV with columns subject,subgroup,treatment,response")->required();
  ana->add_option("--design", design_path, "INI design description")->required();
  ana->add_option("--methods", methods_text, "Comma-separated methods, e.g. anova+t,strat+boot")->required();
  ana->add_option("--alpha", alpha, "One-sided FWER level");
  ana->add_option("--n-boot", analysis_boot, "Bootstrap replicates")->check(CLI::PositiveNumber);
  ana->add_option("--seed", analysis_seed, "Seed for bootstrap and integration");
  ana->add_option("--out", analysis_out, "Output CSV (default stdout)");

  fwer::Example1Settings ex;
  std::string ex_out;
  auto* ex1 = app.add_subcommand("example1", "Mean true FWER of the anova test under cancelling effects");
  ex1->add_option("--n-iter", ex.n_iter, "Iterations per sample size")->check(CLI::PositiveNumber);
  ex1->add_option("--seed", ex.seed, "Seed");
  ex1->add_option("--out", ex_out, "Output CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*sim) {
      fwer::GridSpec grid = fwer::load_grid_config(config_path);
      if (seed) grid.seed = *seed;
      if (n_studies) grid.n_studies = *n_studies;
      if (n_runs) grid.n_runs = *n_runs;
      if (n_boot) grid.n_boot = *n_boot;
      try {
        grid.cells();
      } catch (const std::invalid_argument& e) {
        throw fwer::ConfigError(e.what());
      }
      const auto t0 = std::chrono::steady_clock::now();
      const fwer::SimulationReport report = fwer::run_scenario_grid(grid, workers);
      fwer::write_report(report, grid, out_dir);
      const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      int failed = 0;
      for (const auto* cells : {&report.fwer, &report.power})
        for (const auto& c : *cells) failed += c.failed_studies;
      std::cerr << "wrote " << out_dir << "/fwer.csv and " << out_dir << "/power.csv in " << sec << " s";
      if (failed > 0) std::cerr << " (" << failed << " study results excluded after generation failures)";
      std::cerr << "\n";
    } else if (*ana) {
      const fwer::TrialDesign design = fwer::load_design(design_path);
      fwer::AnalysisSettings s;
      s.methods = parse_methods(methods_text);
      s.alpha = alpha;
      s.n_boot = analysis_boot;
      s.seed = analysis_seed;
      if (!(alpha > 0.0 && alpha < 1.0)) throw fwer::ConfigError("alpha must lie in (0, 1)");
      const fwer::IngestedData data = fwer::ingest_dataset(data_path, design);
      for (const auto& w : data.warnings) std::cerr << "warning: " << w << "\n";
      std::cerr << "read " << data.rows << " rows\n";
      const auto rows = fwer::analyze(data.summary, design, s);
      emit(analysis_out, [&](std::ostream& o) { fwer::write_analysis_csv(o, rows, s); });
      for (const auto& r : rows)
        if (!r.error.empty()) std::cerr << r.method << " failed: " << r.error << "\n";
    } else if (*ex1) {
      emit(ex_out, [&](std::ostream& o) { fwer::write_example1(o, ex); });
    }
  } catch (const fwer::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const fwer::DesignError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const fwer::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const fwer::Error& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  return 0;
}
