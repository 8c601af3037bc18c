#ifndef FWER_TRIAL_HPP
#define FWER_TRIAL_HPP

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fwer {

// Subgroups are 0-based. Treatment index 0 is the shared control; indices
// 1.. are experimental treatments in order of first appearance.
class TrialDesign {
 public:
  static constexpr int kControl = 0;

  TrialDesign(int n_subgroups, std::vector<std::vector<int>> populations,
              std::vector<std::string> population_treatments, std::string control_label = "C");

  int n_subgroups() const noexcept { return n_subgroups_; }
  int n_populations() const noexcept { return static_cast<int>(populations_.size()); }
  int n_treatments() const noexcept { return static_cast<int>(labels_.size()); }
  int n_cells() const noexcept { return n_subgroups_ * n_treatments(); }
  int cell(int subgroup, int treatment) const noexcept { return subgroup * n_treatments() + treatment; }

  const std::vector<int>& members(int population) const;
  int treatment(int population) const;
  bool contains(int population, int subgroup) const;
  // True if (subgroup, treatment) is a cell of the design.
  bool cell_used(int subgroup, int treatment) const;
  // Treatments available in the subgroup (always includes the control).
  std::vector<int> treatments_of(int subgroup) const;

  const std::string& treatment_label(int treatment) const;
  // -1 if the label is unknown.
  int treatment_index(std::string_view label) const;

 private:
  void check_population(int population) const;

  int n_subgroups_;
  std::vector<std::vector<int>> populations_;
  std::vector<int> population_treatment_;
  std::vector<std::string> labels_;
  std::vector<char> used_;
};

// Prevalences per subgroup; means and variances indexed by design cell.
class PopulationModel {
 public:
  PopulationModel(const TrialDesign& design, std::vector<double> prevalences, std::vector<double> cell_means,
                  std::vector<double> cell_variances);
  static PopulationModel homogeneous(const TrialDesign& design, std::vector<double> prevalences,
                                     std::vector<double> cell_means, double sigma2);

  double prevalence(int subgroup) const { return prevalences_.at(subgroup); }
  const std::vector<double>& prevalences() const noexcept { return prevalences_; }
  double mean(int cell) const { return means_.at(cell); }
  double variance(int cell) const { return variances_.at(cell); }
  const std::vector<double>& means() const noexcept { return means_; }
  const std::vector<double>& variances() const noexcept { return variances_; }

 private:
  std::vector<double> prevalences_;
  std::vector<double> means_;
  std::vector<double> variances_;
};

// Cell sizes may be fractional (proportional allocation of a stratum).
class SampleLayout {
 public:
  SampleLayout() = default;
  SampleLayout(int n_subgroups, int n_treatments, std::vector<double> cell_sizes);

  int n_subgroups() const noexcept { return n_subgroups_; }
  int n_treatments() const noexcept { return n_treatments_; }
  double size(int cell) const { return sizes_[cell]; }
  double size(int subgroup, int treatment) const { return sizes_[subgroup * n_treatments_ + treatment]; }
  const std::vector<double>& sizes() const noexcept { return sizes_; }

  double stratum_size(int subgroup) const;
  double population_size(const TrialDesign& design, int population) const;
  double population_treatment_size(const TrialDesign& design, int population, int treatment) const;
  double total() const;
  double allocation_rate(int subgroup, int treatment) const;

 private:
  int n_subgroups_ = 0;
  int n_treatments_ = 0;
  std::vector<double> sizes_;
};

// Sufficient statistics: per-cell mean and centred sum of squares.
struct TrialSummary {
  SampleLayout layout;
  std::vector<double> means;
  std::vector<double> ss;
  std::optional<double> known_variance;

  void validate() const;
};

struct PooledVariance {
  double variance;
  double df;
};

struct HypothesisResult {
  double statistic = 0.0;
  double se = 0.0;
  double estimate = 0.0;
  std::optional<double> critical_value;
  std::optional<double> adjusted_p;
  std::optional<double> ci_lower;
  bool reject = false;
};

struct TestResult {
  std::string method;
  double alpha = 0.025;
  std::vector<HypothesisResult> hypotheses;
};

double true_effect(const TrialDesign& design, const PopulationModel& model, int population);

double population_mean(const TrialDesign& design, const TrialSummary& summary, int population, int treatment);

// Within-cell pooled variance; df is the sum over cells of max(n - 1, 0),
// which is N - s for integer sizes.
PooledVariance pooled_variance(const TrialSummary& summary);

}  // namespace fwer

#endif  // FWER_TRIAL_HPP
