#ifndef FWER_IO_HPP
#define FWER_IO_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fwer/procedures.hpp"
#include "fwer/simulation.hpp"
#include "fwer/trial.hpp"

namespace fwer {

inline constexpr const char* kVersion = "1.0.0";

// Grid configuration in INI form. Sections and keys:
//   [scenario]    structure, ehf, chf, n, allocation, split, alpha, sigma2, methods
//   [replication] n_studies, n_runs, n_boot, tol, seed
//   [output]      fwer, power
// List values are comma separated. Unknown sections or keys and malformed
// values raise ConfigError.
GridSpec parse_grid_config(std::istream& in);
GridSpec load_grid_config(const std::filesystem::path& path);

// One "key = value" line per setting in a fixed order; the config hash is
// taken over this text.
std::vector<std::string> canonical_config(const GridSpec& grid);
std::uint64_t fnv1a64(std::string_view text);
std::string config_hash(const GridSpec& grid);

// Six significant digits.
std::string format_number(double x);

// Long-form table: N,alloc,EHF,CHF,method,estimate,mc_se,n_studies,n_runs,
// sorted by (N, alloc, EHF, CHF, method) and preceded by '#' metadata lines.
void write_report_csv(std::ostream& out, const std::vector<CellResult>& cells, const GridSpec& grid);
// Writes fwer.csv and power.csv into dir (created if missing).
void write_report(const SimulationReport& report, const GridSpec& grid, const std::filesystem::path& dir);

// Design description in INI form:
//   [design]
//   subgroups = 3
//   populations = 1,2,3; 2,3     (1-based subgroup lists)
//   treatments = E; E            (optional, default E for every population)
//   control = C                  (optional)
TrialDesign parse_design(std::istream& in);
TrialDesign load_design(const std::filesystem::path& path);

struct DatasetRow {
  std::string subject;
  int subgroup = 0;  // 1-based as in the file
  std::string treatment;
  double response = 0.0;
};

// Header must be exactly subject,subgroup,treatment,response. Errors carry
// the 1-based line number.
std::vector<DatasetRow> read_dataset(std::istream& in);
void write_dataset(std::ostream& out, const std::vector<DatasetRow>& rows);

struct IngestedData {
  TrialSummary summary;
  std::size_t rows = 0;
  std::vector<long> cell_counts;  // by design cell
  std::vector<std::string> warnings;
};

// Rows are checked against the design; the line number in errors counts the
// header as line 1. Duplicate subject ids produce a warning only.
IngestedData summarize_dataset(const std::vector<DatasetRow>& rows, const TrialDesign& design);
IngestedData ingest_dataset(const std::filesystem::path& path, const TrialDesign& design);

struct AnalysisSettings {
  std::vector<MethodSpec> methods;
  double alpha = 0.025;
  int n_boot = 1000;
  double tol = 5e-4;
  std::uint64_t seed = 1;
};

struct AnalysisRow {
  std::string method;
  int population = 0;  // 1-based
  std::optional<HypothesisResult> result;
  std::string error;  // set when the method failed on this dataset
};

// Every method is run independently; a failing method yields rows with the
// error message and the others proceed.
std::vector<AnalysisRow> analyze(const TrialSummary& summary, const TrialDesign& design,
                                 const AnalysisSettings& settings);
void write_analysis_csv(std::ostream& out, const std::vector<AnalysisRow>& rows, const AnalysisSettings& settings);

struct Example1Settings {
  std::vector<int> n = {250, 500, 1000};
  int n_iter = 10000;
  int variance_n = 100000;
  int variance_draws = 10000;
  double tol = 5e-4;
  std::uint64_t seed = 1;
};

void write_example1(std::ostream& out, const Example1Settings& settings);

}  // namespace fwer

#endif  // FWER_IO_HPP
