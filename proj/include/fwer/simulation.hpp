#ifndef FWER_SIMULATION_HPP
#define FWER_SIMULATION_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fwer/bootstrap.hpp"
#include "fwer/procedures.hpp"
#include "fwer/rng.hpp"
#include "fwer/trial.hpp"

namespace fwer {

enum class Structure { nested, overlapping };
// A: 1:1 everywhere, B: 2:1 everywhere, C: 2:1 in the intersection strata and
// 1:1 elsewhere, D: all cells drawn from one multinomial with 1:1 expected.
enum class Allocation { A, B, C, D };
// How patterns A-C split a stratum: exact real-valued shares, or integer
// experimental share rounded half-to-even with the remainder to control.
enum class AllocationSplit { proportional, rounded };

std::string to_string(Structure s);
std::string to_string(Allocation a);
Structure parse_structure(const std::string& text);
Allocation parse_allocation(const std::string& text);
AllocationSplit parse_split(const std::string& text);

// Three subgroups; subgroup 2 (index 1) lies in every population.
TrialDesign make_design(Structure s);

// One cell of the simulation grid.
struct ScenarioSpec {
  Structure structure = Structure::nested;
  double ehf = 0.0;
  double chf = 0.0;
  int n = 500;
  Allocation allocation = Allocation::A;
  AllocationSplit split = AllocationSplit::proportional;
  double alpha = 0.025;
  double sigma2 = 0.25;
  int n_studies = 100;
  int n_runs = 1000;
  int n_boot = 1000;
  double tol = 5e-4;
  std::vector<MethodSpec> methods;
  std::uint64_t seed = 1;

  void validate() const;
};

struct StudyConfig {
  std::array<double, 3> prevalences{};
  std::array<double, 3> effects{};
  std::array<double, 3> control_means{};

  PopulationModel model(const TrialDesign& design, double sigma2) const;
};

std::array<double, 3> gen_prevalences(RngStream& rng);
std::array<double, 3> gen_null_effects(const std::array<double, 3>& prevalences, Structure s, double ehf,
                                       RngStream& rng);
// attempts, when given, receives the number of cube draws used.
std::array<double, 3> gen_alt_effects(const std::array<double, 3>& prevalences, Structure s, double ehf,
                                      RngStream& rng, long* attempts = nullptr);
std::array<double, 3> gen_control_means(double chf);

// Strata from Multinomial(n, prevalences), then split per the pattern. Any
// design cell left empty triggers a full redraw; redraws receives the count.
SampleLayout draw_layout(const TrialDesign& design, std::span<const double> prevalences, int n,
                         Allocation allocation, AllocationSplit split, RngStream& rng, int* redraws = nullptr);

// Cell means ~ N(mu, sigma2 / n) and ss ~ sigma2 * chi2(n - 1) for every
// design cell.
TrialSummary draw_summary(const TrialDesign& design, const SampleLayout& layout, const PopulationModel& model,
                          RngStream& rng);

// Per-study rates for every method of the spec, computed on common data.
struct StudyOutcome {
  bool ok = true;
  std::string error;
  std::vector<double> rate;  // one per method
  long layout_redraws = 0;
  long failed_runs = 0;
};

enum class SimTarget { fwer, power };

StudyConfig generate_study(const ScenarioSpec& spec, SimTarget target, int study);
StudyOutcome simulate_study(const ScenarioSpec& spec, SimTarget target, int study);

// Proportion of runs with at least one rejection, per method; the study must
// satisfy the global null.
std::vector<double> simulate_fwer(const StudyConfig& study, const ScenarioSpec& spec, RngStream& rng);
// Mean proportion of rejected hypotheses per method.
std::vector<double> simulate_power(const StudyConfig& study, const ScenarioSpec& spec, RngStream& rng);

struct GridSpec {
  Structure structure = Structure::nested;
  std::vector<double> ehf = {0.0, 1.0, 10.0};
  std::vector<double> chf = {0.0, 1.0, 10.0};
  std::vector<int> n = {500};
  std::vector<Allocation> allocations = {Allocation::A};
  AllocationSplit split = AllocationSplit::proportional;
  double alpha = 0.025;
  double sigma2 = 0.25;
  int n_studies = 100;
  int n_runs = 1000;
  int n_boot = 1000;
  double tol = 5e-4;
  std::vector<MethodSpec> methods;
  std::uint64_t seed = 1;
  bool fwer = true;
  bool power = true;

  std::vector<ScenarioSpec> cells() const;
};

struct CellResult {
  int n = 0;
  Allocation allocation = Allocation::A;
  double ehf = 0.0;
  double chf = 0.0;
  std::string method;
  double estimate = 0.0;
  double mc_se = 0.0;
  int n_studies = 0;  // studies that completed
  int n_runs = 0;
  int failed_studies = 0;
  std::vector<double> per_study;
};

struct SimulationReport {
  std::vector<CellResult> fwer;
  std::vector<CellResult> power;
};

// Every (cell, study) pair is an independent task; results do not depend on
// the worker count.
SimulationReport run_scenario_grid(const GridSpec& grid, int workers = 1);

struct Example1Result {
  int n = 0;
  int n_iter = 0;
  double mean_fwer = 0.0;
  double mc_se = 0.0;
};

// Mean true FWER of the anova test calibrated at nu = 0, over random strata
// sizes for the cancelling-effects configuration. zero_effects switches the
// subgroup effects off (homogeneous null control).
Example1Result example1_analytic(int n, int n_iter, RngStream& rng, double tol = 5e-4, bool zero_effects = false);

struct NuVariances {
  double var_nu1 = 0.0;
  double var_nu2 = 0.0;
};
NuVariances example1_nu_variances(int n, int n_draws, RngStream& rng);

}  // namespace fwer

#endif  // FWER_SIMULATION_HPP
