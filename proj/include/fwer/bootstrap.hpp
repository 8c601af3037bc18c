#ifndef FWER_BOOTSTRAP_HPP
#define FWER_BOOTSTRAP_HPP

#include <span>
#include <vector>

#include "fwer/procedures.hpp"
#include "fwer/rng.hpp"
#include "fwer/trial.hpp"

namespace fwer {

// Observed cell means projected onto the means satisfying every null
// hypothesis (theta_I = 0 with sample strata weights).
struct NullProjection {
  std::vector<double> means;      // indexed by design cell
  double residual_norm = 0.0;     // distance between observed and projected means
  double max_constraint = 0.0;    // largest |r_I' theta_I| after projection
};

enum class ZeroStratumPolicy { redraw, skip };
enum class PValueRule { plain, add_one };

struct BootstrapConfig {
  int n_boot = 1000;
  ZeroStratumPolicy zero_policy = ZeroStratumPolicy::redraw;
  PValueRule p_rule = PValueRule::plain;
};

struct BootstrapSample {
  std::vector<Family> families;
  // max over populations of Z*, one vector per family, one entry per replicate.
  std::vector<std::vector<double>> max_z;
  // Per-replicate statistics (replicate-major, populations inner); filled
  // only on request.
  std::vector<std::vector<double>> replicate_z;
  long redraws = 0;
  long skipped = 0;

  const std::vector<double>& max_for(Family f) const;
};

NullProjection project_to_null(const TrialSummary& summary, const TrialDesign& design);

// One set of replicates shared by all listed families. sigma2 is the
// variance used for resampling and for the replicate statistics.
BootstrapSample bootstrap_distribution(const TrialSummary& summary, const TrialDesign& design,
                                       std::span<const Family> families, double sigma2, const BootstrapConfig& cfg,
                                       RngStream& rng, bool keep_replicates = false);
BootstrapSample bootstrap_distribution(const TrialSummary& summary, const TrialDesign& design,
                                       const MethodSpec& method, const BootstrapConfig& cfg, RngStream& rng,
                                       bool keep_replicates = false);

std::vector<double> adjusted_pvalues(std::span<const double> observed_z, std::span<const double> boot_max,
                                     PValueRule rule = PValueRule::plain);

// k-th smallest of the sample with k = ceil((1 - alpha) * n).
double bootstrap_critical_value(std::span<const double> boot_max, double alpha);

TestResult bootstrap_test(const StatVector& observed, std::span<const double> boot_max, const MethodSpec& method,
                          double alpha, PValueRule rule = PValueRule::plain);

}  // namespace fwer

#endif  // FWER_BOOTSTRAP_HPP
