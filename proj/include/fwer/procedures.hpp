#ifndef FWER_PROCEDURES_HPP
#define FWER_PROCEDURES_HPP

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fwer/mvn.hpp"
#include "fwer/rng.hpp"
#include "fwer/trial.hpp"

namespace fwer {

enum class Family { anova, marginal, marginal_shrunk, stratified };
enum class Calibration { analytic, bootstrap, unadjusted };
enum class VarianceMode { known, pooled, heterogeneous };

struct MethodSpec {
  Family family = Family::anova;
  Calibration calibration = Calibration::analytic;
  VarianceMode variance = VarianceMode::pooled;

  // Throws std::invalid_argument for combinations without a defined test.
  void validate() const;
  // "anova+t", "marg+shr+boot", ... with an "@known" / "@het" suffix when the
  // variance mode is not pooled.
  std::string name() const;
  // Accepts unadj, anova+t, anova+boot, marg+t, marg+boot, marg+shr+boot,
  // strat+boot, optionally followed by @known, @pooled or @het.
  static MethodSpec parse(std::string_view text);
};

// Per-population statistics. corr is present for the families that have an
// analytic calibration; df is empty when the statistic is treated as normal.
struct StatVector {
  std::vector<double> z;
  std::vector<double> se;
  std::vector<double> estimate;
  std::vector<double> df;
  std::optional<CorrelationMatrix> corr;

  int size() const noexcept { return static_cast<int>(z.size()); }
};

// Variance used by the homogeneous-variance families together with its df
// (absent for a known variance).
struct ResolvedVariance {
  double sigma2;
  std::optional<double> df;
};
ResolvedVariance resolve_variance(const TrialSummary& summary, VarianceMode mode);

StatVector anova_statistics(const TrialSummary& summary, const TrialDesign& design,
                            VarianceMode mode = VarianceMode::pooled);
CorrelationMatrix anova_correlation(const SampleLayout& layout, const TrialDesign& design);
// Expectation of the anova statistics given the layout, for a homogeneous
// model with variance sigma2.
std::vector<double> anova_noncentrality(const SampleLayout& layout, const TrialDesign& design,
                                        const PopulationModel& model, double sigma2);

StatVector marginal_statistics(const TrialSummary& summary, const TrialDesign& design,
                               VarianceMode mode = VarianceMode::pooled);
double satterthwaite_df(double var_e, double n_e, double var_c, double n_c);
// Per-population critical values from the equicoordinate t quantile with the
// population's own df.
std::vector<double> marginal_critical_values(const StatVector& stats, double alpha, double tol, RngStream& rng);

std::vector<double> james_stein_shrink(std::span<const double> cell_means, std::span<const double> cell_sizes,
                                       double sigma2);
double shrunk_population_variance(std::span<const double> shrunk_means, std::span<const double> cell_sizes,
                                  double sigma2);
StatVector shrunk_statistics(const TrialSummary& summary, const TrialDesign& design,
                             VarianceMode mode = VarianceMode::pooled);

StatVector stratified_statistics(const TrialSummary& summary, const TrialDesign& design,
                                 VarianceMode mode = VarianceMode::pooled);

// Observed statistics of the method's family.
StatVector compute_statistics(const TrialSummary& summary, const TrialDesign& design, const MethodSpec& method);

TestResult analytic_test(const StatVector& stats, const MethodSpec& method, double alpha, double tol,
                         RngStream& rng);
// Per-hypothesis tests at the univariate level; no multiplicity adjustment.
TestResult unadjusted_test(const StatVector& stats, const MethodSpec& method, double alpha);

// Rejection flags of the analytic test without solving for the critical
// value: hypotheses clearly below the univariate quantile or above the
// Bonferroni bound are decided directly, the rest through the adjusted p-value.
void analytic_decisions(const StatVector& stats, const MethodSpec& method, double alpha, double tol, RngStream& rng,
                        std::span<char> reject);

// Allocation-free statistics on raw arrays, used inside the bootstrap. n and
// ybar are indexed by design cell; sigma2 is treated as known. For the
// marginal family the population variance is the between-strata spread of
// the cell means plus sigma2.
class StatKernel {
 public:
  explicit StatKernel(const TrialDesign& design);

  int n_populations() const noexcept { return static_cast<int>(pops_.size()); }
  void compute(Family family, const double* n, const double* ybar, double sigma2, double* est, double* se) const;

 private:
  struct Pop {
    std::vector<int> strata;
    std::vector<int> cell_e;
    std::vector<int> cell_c;
    std::vector<std::vector<int>> stratum_cells;
  };
  void anova(const Pop& p, const double* n, const double* ybar, double sigma2, double& est, double& se) const;
  void marginal(const Pop& p, const double* n, const double* ybar, double sigma2, bool shrink, double& est,
                double& se) const;
  void stratified(const Pop& p, const double* n, const double* ybar, double sigma2, double& est, double& se) const;

  std::vector<Pop> pops_;
};

}  // namespace fwer

#endif  // FWER_PROCEDURES_HPP
