#include "fwer/bootstrap.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "fwer/errors.hpp"

namespace fwer {

namespace {

// Cells entering the constraint system: those a population compares.
std::vector<int> constraint_cells(const TrialDesign& design) {
  std::vector<char> used(design.n_cells(), 0);
  for (int p = 0; p < design.n_populations(); ++p) {
    for (int i : design.members(p)) {
      used[design.cell(i, design.treatment(p))] = 1;
      used[design.cell(i, TrialDesign::kControl)] = 1;
    }
  }
  std::vector<int> cells;
  for (int c = 0; c < design.n_cells(); ++c)
    if (used[c]) cells.push_back(c);
  return cells;
}

}  // namespace

const std::vector<double>& BootstrapSample::max_for(Family f) const {
  for (std::size_t k = 0; k < families.size(); ++k)
    if (families[k] == f) return max_z[k];
  throw std::invalid_argument("family not part of the bootstrap sample");
}

NullProjection project_to_null(const TrialSummary& summary, const TrialDesign& design) {
  summary.validate();
  const SampleLayout& lay = summary.layout;
  const std::vector<int> cells = constraint_cells(design);
  std::vector<int> pos(design.n_cells(), -1);
  for (std::size_t k = 0; k < cells.size(); ++k) pos[cells[k]] = static_cast<int>(k);

  const int m = static_cast<int>(cells.size());
  const int np = design.n_populations();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, np);
  for (int p = 0; p < np; ++p) {
    double npop = 0.0;
    for (int i : design.members(p)) npop += lay.stratum_size(i);
    if (!(npop > 0.0)) throw DegenerateSampleError("population " + std::to_string(p + 1) + " has no subjects");
    for (int i : design.members(p)) {
      const double r = lay.stratum_size(i) / npop;
      a(pos[design.cell(i, design.treatment(p))], p) += r;
      a(pos[design.cell(i, TrialDesign::kControl)], p) -= r;
    }
  }
  Eigen::VectorXd y(m);
  for (int k = 0; k < m; ++k) y(k) = summary.means[cells[k]];

  const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(a);
  const Eigen::VectorXd coef = cod.solve(y);
  const Eigen::VectorXd resid = y - a * coef;

  NullProjection out;
  out.means = summary.means;
  for (int k = 0; k < m; ++k) out.means[cells[k]] = resid(k);
  out.residual_norm = (y - resid).norm();
  out.max_constraint = (a.transpose() * resid).cwiseAbs().maxCoeff();
  return out;
}

BootstrapSample bootstrap_distribution(const TrialSummary& summary, const TrialDesign& design,
                                       std::span<const Family> families, double sigma2, const BootstrapConfig& cfg,
                                       RngStream& rng, bool keep_replicates) {
  if (cfg.n_boot < 1) throw std::invalid_argument("n_boot must be positive");
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw std::invalid_argument("sigma2 must be positive");
  if (families.empty()) throw std::invalid_argument("no statistic family requested");

  const NullProjection null = project_to_null(summary, design);
  const SampleLayout& lay = summary.layout;
  const int s = design.n_subgroups();
  const int nt = design.n_treatments();
  const int np = design.n_populations();

  std::vector<double> strata(s), probs(s);
  double total = 0.0;
  for (int i = 0; i < s; ++i) {
    strata[i] = lay.stratum_size(i);
    total += strata[i];
  }
  if (!(total > 0.0)) throw DegenerateSampleError("empty sample");
  for (int i = 0; i < s; ++i) probs[i] = strata[i] / total;
  const int n_total = static_cast<int>(std::lround(total));

  std::vector<char> needed(s, 0);
  for (int p = 0; p < np; ++p)
    for (int i : design.members(p)) needed[i] = 1;
  const std::vector<int> cells = constraint_cells(design);

  BootstrapSample out;
  out.families.assign(families.begin(), families.end());
  out.max_z.assign(families.size(), {});
  for (auto& v : out.max_z) v.reserve(cfg.n_boot);
  if (keep_replicates) {
    out.replicate_z.assign(families.size(), {});
    for (auto& v : out.replicate_z) v.reserve(static_cast<std::size_t>(cfg.n_boot) * np);
  }

  const StatKernel kernel(design);
  const long redraw_limit = 100L * cfg.n_boot;
  std::vector<int> counts(s);
  std::vector<double> n_star(design.n_cells(), 0.0), y_star(null.means);
  std::vector<double> est(np), se(np);

  for (int b = 0; b < cfg.n_boot; ++b) {
    RngStream r = rng.child(static_cast<std::uint64_t>(b));
    bool ok = false;
    while (true) {
      multinomial_sample(r, n_total, probs, counts);
      ok = true;
      for (int i = 0; i < s; ++i)
        if (needed[i] && counts[i] == 0) ok = false;
      if (ok) break;
      if (cfg.zero_policy == ZeroStratumPolicy::skip) break;
      if (++out.redraws > redraw_limit)
        throw NumericError("bootstrap: zero-stratum redraw limit exceeded");
    }
    if (!ok) {
      ++out.skipped;
      continue;
    }
    for (int i = 0; i < s; ++i) {
      for (int t = 0; t < nt; ++t) {
        const int c = design.cell(i, t);
        n_star[c] = strata[i] > 0.0 ? counts[i] * lay.size(c) / strata[i] : 0.0;
      }
    }
    for (int c : cells) {
      y_star[c] = n_star[c] > 0.0 ? null.means[c] + std::sqrt(sigma2 / n_star[c]) * r.normal() : null.means[c];
    }
    for (std::size_t f = 0; f < families.size(); ++f) {
      kernel.compute(families[f], n_star.data(), y_star.data(), sigma2, est.data(), se.data());
      double mx = -std::numeric_limits<double>::infinity();
      for (int p = 0; p < np; ++p) {
        const double z = est[p] / se[p];
        mx = std::max(mx, z);
        if (keep_replicates) out.replicate_z[f].push_back(z);
      }
      out.max_z[f].push_back(mx);
    }
  }
  if (out.max_z.front().empty()) throw NumericError("bootstrap: every replicate was skipped");
  return out;
}

BootstrapSample bootstrap_distribution(const TrialSummary& summary, const TrialDesign& design,
                                       const MethodSpec& method, const BootstrapConfig& cfg, RngStream& rng,
                                       bool keep_replicates) {
  method.validate();
  const double sigma2 = method.variance == VarianceMode::heterogeneous
                            ? pooled_variance(summary).variance
                            : resolve_variance(summary, method.variance).sigma2;
  const Family fam[1] = {method.family};
  return bootstrap_distribution(summary, design, fam, sigma2, cfg, rng, keep_replicates);
}

std::vector<double> adjusted_pvalues(std::span<const double> observed_z, std::span<const double> boot_max,
                                     PValueRule rule) {
  if (boot_max.empty()) throw std::invalid_argument("empty bootstrap sample");
  std::vector<double> sorted(boot_max.begin(), boot_max.end());
  std::sort(sorted.begin(), sorted.end());
  const double b = static_cast<double>(sorted.size());
  std::vector<double> out;
  out.reserve(observed_z.size());
  for (double z : observed_z) {
    const auto it = std::lower_bound(sorted.begin(), sorted.end(), z);
    const double count = static_cast<double>(sorted.end() - it);
    out.push_back(rule == PValueRule::plain ? count / b : (count + 1.0) / (b + 1.0));
  }
  return out;
}

double bootstrap_critical_value(std::span<const double> boot_max, double alpha) {
  if (boot_max.empty()) throw std::invalid_argument("empty bootstrap sample");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  const long b = static_cast<long>(boot_max.size());
  long k = b - static_cast<long>(std::floor(alpha * static_cast<double>(b) + 1e-9));
  k = std::clamp(k, 1L, b);
  std::vector<double> v(boot_max.begin(), boot_max.end());
  std::nth_element(v.begin(), v.begin() + (k - 1), v.end());
  return v[k - 1];
}

TestResult bootstrap_test(const StatVector& observed, std::span<const double> boot_max, const MethodSpec& method,
                          double alpha, PValueRule rule) {
  const double c = bootstrap_critical_value(boot_max, alpha);
  const std::vector<double> p = adjusted_pvalues(observed.z, boot_max, rule);
  TestResult res;
  res.method = method.name();
  res.alpha = alpha;
  res.hypotheses.resize(observed.size());
  for (int i = 0; i < observed.size(); ++i) {
    HypothesisResult& h = res.hypotheses[i];
    h.statistic = observed.z[i];
    h.se = observed.se[i];
    h.estimate = observed.estimate[i];
    h.critical_value = c;
    h.adjusted_p = p[i];
    h.reject = observed.z[i] > c;
  }
  return res;
}

}  // namespace fwer
