#include "fwer/trial.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "fwer/errors.hpp"

namespace fwer {

TrialDesign::TrialDesign(int n_subgroups, std::vector<std::vector<int>> populations,
                         std::vector<std::string> population_treatments, std::string control_label)
    : n_subgroups_(n_subgroups) {
  if (n_subgroups < 1) throw DesignError("design needs at least one subgroup");
  if (populations.empty()) throw DesignError("design needs at least one population");
  if (populations.size() != population_treatments.size())
    throw DesignError("one treatment label per population is required");
  labels_.push_back(std::move(control_label));
  for (std::size_t p = 0; p < populations.size(); ++p) {
    auto set = populations[p];
    if (set.empty()) throw DesignError("population " + std::to_string(p + 1) + " is empty");
    std::sort(set.begin(), set.end());
    if (std::adjacent_find(set.begin(), set.end()) != set.end())
      throw DesignError("population " + std::to_string(p + 1) + " lists a subgroup twice");
    if (set.front() < 0 || set.back() >= n_subgroups)
      throw DesignError("population " + std::to_string(p + 1) + " has a subgroup outside the design");
    for (std::size_t q = 0; q < populations_.size(); ++q) {
      if (populations_[q] == set) throw DesignError("duplicate population index set");
    }
    const std::string& label = population_treatments[p];
    if (label == labels_[0]) throw DesignError("a population cannot use the control label as its treatment");
    int t = treatment_index(label);
    if (t < 0) {
      labels_.push_back(label);
      t = static_cast<int>(labels_.size()) - 1;
    }
    populations_.push_back(std::move(set));
    population_treatment_.push_back(t);
  }
  used_.assign(static_cast<std::size_t>(n_cells()), 0);
  for (int p = 0; p < n_populations(); ++p) {
    for (int i : populations_[p]) {
      used_[cell(i, kControl)] = 1;
      used_[cell(i, population_treatment_[p])] = 1;
    }
  }
}

void TrialDesign::check_population(int population) const {
  if (population < 0 || population >= n_populations())
    throw DesignError("unknown population index " + std::to_string(population));
}

const std::vector<int>& TrialDesign::members(int population) const {
  check_population(population);
  return populations_[population];
}

int TrialDesign::treatment(int population) const {
  check_population(population);
  return population_treatment_[population];
}

bool TrialDesign::contains(int population, int subgroup) const {
  const auto& m = members(population);
  return std::binary_search(m.begin(), m.end(), subgroup);
}

bool TrialDesign::cell_used(int subgroup, int treatment) const {
  if (subgroup < 0 || subgroup >= n_subgroups_ || treatment < 0 || treatment >= n_treatments()) return false;
  return used_[cell(subgroup, treatment)] != 0;
}

std::vector<int> TrialDesign::treatments_of(int subgroup) const {
  std::vector<int> out;
  for (int t = 0; t < n_treatments(); ++t)
    if (cell_used(subgroup, t)) out.push_back(t);
  return out;
}

const std::string& TrialDesign::treatment_label(int treatment) const { return labels_.at(treatment); }

int TrialDesign::treatment_index(std::string_view label) const {
  for (std::size_t t = 0; t < labels_.size(); ++t)
    if (labels_[t] == label) return static_cast<int>(t);
  return -1;
}

PopulationModel::PopulationModel(const TrialDesign& design, std::vector<double> prevalences,
                                 std::vector<double> cell_means, std::vector<double> cell_variances)
    : prevalences_(std::move(prevalences)), means_(std::move(cell_means)), variances_(std::move(cell_variances)) {
  if (static_cast<int>(prevalences_.size()) != design.n_subgroups())
    throw std::invalid_argument("one prevalence per subgroup is required");
  double total = 0.0;
  for (double p : prevalences_) {
    if (!(p > 0.0)) throw std::invalid_argument("prevalences must be strictly positive");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("prevalences must sum to one");
  if (static_cast<int>(means_.size()) != design.n_cells() || static_cast<int>(variances_.size()) != design.n_cells())
    throw std::invalid_argument("means and variances must be given for every design cell");
  for (int i = 0; i < design.n_subgroups(); ++i) {
    for (int t = 0; t < design.n_treatments(); ++t) {
      if (!design.cell_used(i, t)) continue;
      const int c = design.cell(i, t);
      if (!std::isfinite(means_[c])) throw std::invalid_argument("cell means must be finite");
      if (!(variances_[c] > 0.0)) throw std::invalid_argument("cell variances must be positive");
    }
  }
}

PopulationModel PopulationModel::homogeneous(const TrialDesign& design, std::vector<double> prevalences,
                                             std::vector<double> cell_means, double sigma2) {
  std::vector<double> v(static_cast<std::size_t>(design.n_cells()), sigma2);
  return PopulationModel(design, std::move(prevalences), std::move(cell_means), std::move(v));
}

SampleLayout::SampleLayout(int n_subgroups, int n_treatments, std::vector<double> cell_sizes)
    : n_subgroups_(n_subgroups), n_treatments_(n_treatments), sizes_(std::move(cell_sizes)) {
  if (n_subgroups < 1 || n_treatments < 2) throw std::invalid_argument("layout dimensions are too small");
  if (static_cast<int>(sizes_.size()) != n_subgroups * n_treatments)
    throw std::invalid_argument("layout needs one size per cell");
  for (double n : sizes_)
    if (!(n >= 0.0) || !std::isfinite(n)) throw std::invalid_argument("cell sizes must be nonnegative");
}

double SampleLayout::stratum_size(int subgroup) const {
  double s = 0.0;
  for (int t = 0; t < n_treatments_; ++t) s += size(subgroup, t);
  return s;
}

double SampleLayout::population_size(const TrialDesign& design, int population) const {
  double s = 0.0;
  for (int i : design.members(population)) s += stratum_size(i);
  return s;
}

double SampleLayout::population_treatment_size(const TrialDesign& design, int population, int treatment) const {
  double s = 0.0;
  for (int i : design.members(population)) s += size(i, treatment);
  return s;
}

double SampleLayout::total() const { return std::accumulate(sizes_.begin(), sizes_.end(), 0.0); }

double SampleLayout::allocation_rate(int subgroup, int treatment) const {
  const double n = stratum_size(subgroup);
  if (!(n > 0.0)) throw DegenerateSampleError("allocation rate of an empty stratum");
  return size(subgroup, treatment) / n;
}

void TrialSummary::validate() const {
  const std::size_t n = layout.sizes().size();
  if (means.size() != n || ss.size() != n) throw std::invalid_argument("summary vectors must match the layout");
  for (std::size_t c = 0; c < n; ++c) {
    if (!(ss[c] >= 0.0)) throw std::invalid_argument("sums of squares must be nonnegative");
    if (layout.size(static_cast<int>(c)) <= 1.0 && ss[c] != 0.0)
      throw std::invalid_argument("sum of squares must be zero for cells of size at most one");
  }
  if (known_variance && !(*known_variance > 0.0)) throw std::invalid_argument("known variance must be positive");
}

double true_effect(const TrialDesign& design, const PopulationModel& model, int population) {
  const auto& m = design.members(population);
  const int e = design.treatment(population);
  double pi_p = 0.0, acc = 0.0;
  for (int i : m) {
    const double pi = model.prevalence(i);
    pi_p += pi;
    acc += pi * (model.mean(design.cell(i, e)) - model.mean(design.cell(i, TrialDesign::kControl)));
  }
  return acc / pi_p;
}

double population_mean(const TrialDesign& design, const TrialSummary& summary, int population, int treatment) {
  const auto& m = design.members(population);
  double n = 0.0, acc = 0.0;
  for (int i : m) {
    const int c = design.cell(i, treatment);
    const double w = summary.layout.size(c);
    n += w;
    acc += w * summary.means[c];
  }
  if (!(n >= 1.0)) throw DegenerateSampleError("empty population-treatment cell");
  return acc / n;
}

PooledVariance pooled_variance(const TrialSummary& summary) {
  double ss = 0.0, df = 0.0;
  const auto& sizes = summary.layout.sizes();
  for (std::size_t c = 0; c < sizes.size(); ++c) {
    ss += summary.ss[c];
    df += std::max(sizes[c] - 1.0, 0.0);
  }
  if (!(df > 0.0)) throw InsufficientDataError("pooled variance needs more observations than cells");
  return {ss / df, df};
}

}  // namespace fwer
