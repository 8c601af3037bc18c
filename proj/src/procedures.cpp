#include "fwer/procedures.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fwer/errors.hpp"
#include "fwer/normal.hpp"

namespace fwer {

namespace {

double univariate_quantile(double p, std::optional<double> df) {
  if (df) return boost::math::quantile(boost::math::students_t(*df), p);
  return norm_quantile(p);
}

double univariate_sf(double z, std::optional<double> df) {
  if (df) return boost::math::cdf(boost::math::complement(boost::math::students_t(*df), z));
  return norm_sf(z);
}

std::optional<double> df_at(const StatVector& s, int i) {
  if (s.df.empty()) return std::nullopt;
  return s.df[i];
}

struct Shrink {
  // Positive-part James-Stein on k values; writes into out.
  static void apply(const double* m, const double* n, int k, double sigma2, double* out) {
    double mean = 0.0, denom = 0.0;
    for (int j = 0; j < k; ++j) {
      mean += m[j];
      denom += m[j] * m[j] * n[j] / sigma2;
    }
    mean /= k;
    double kappa = denom > 0.0 ? (k - 2) / denom : 0.0;
    kappa = std::clamp(kappa, 0.0, 1.0);
    for (int j = 0; j < k; ++j) out[j] = (1.0 - kappa) * (m[j] - mean) + mean;
  }
};

// Weighted spread sum w (m - mbar)^2 with weights n / sum(n).
double weighted_spread(const double* m, const double* n, int k) {
  double tot = 0.0, mean = 0.0;
  for (int j = 0; j < k; ++j) {
    tot += n[j];
    mean += n[j] * m[j];
  }
  mean /= tot;
  double v = 0.0;
  for (int j = 0; j < k; ++j) v += n[j] * (m[j] - mean) * (m[j] - mean);
  return v / tot;
}

void require_cells(const TrialDesign& design, const SampleLayout& layout, double min_size) {
  for (int p = 0; p < design.n_populations(); ++p) {
    const int e = design.treatment(p);
    for (int i : design.members(p)) {
      if (layout.size(i, e) < min_size || layout.size(i, TrialDesign::kControl) < min_size)
        throw DegenerateSampleError("subgroup " + std::to_string(i + 1) + " has an empty treatment cell");
    }
  }
}

}  // namespace

void MethodSpec::validate() const {
  if (family == Family::marginal_shrunk && calibration == Calibration::analytic)
    throw std::invalid_argument("shrinkage is only defined with bootstrap calibration");
  if (family == Family::stratified && calibration == Calibration::analytic)
    throw std::invalid_argument("the stratified statistic is only calibrated by bootstrap");
  if (variance == VarianceMode::heterogeneous && family != Family::marginal)
    throw std::invalid_argument("heterogeneous variances are only supported by the marginal family");
}

std::string MethodSpec::name() const {
  std::string base;
  if (calibration == Calibration::unadjusted) {
    switch (family) {
      case Family::anova: base = "unadj"; break;
      case Family::marginal: base = "marg+unadj"; break;
      case Family::marginal_shrunk: base = "marg+shr+unadj"; break;
      case Family::stratified: base = "strat+unadj"; break;
    }
  } else {
    switch (family) {
      case Family::anova: base = "anova"; break;
      case Family::marginal: base = "marg"; break;
      case Family::marginal_shrunk: base = "marg+shr"; break;
      case Family::stratified: base = "strat"; break;
    }
    base += calibration == Calibration::analytic ? "+t" : "+boot";
  }
  if (variance == VarianceMode::known) base += "@known";
  if (variance == VarianceMode::heterogeneous) base += "@het";
  return base;
}

MethodSpec MethodSpec::parse(std::string_view text) {
  std::string_view head = text;
  MethodSpec m;
  if (const auto at = text.find('@'); at != std::string_view::npos) {
    head = text.substr(0, at);
    const auto mode = text.substr(at + 1);
    if (mode == "known") m.variance = VarianceMode::known;
    else if (mode == "pooled") m.variance = VarianceMode::pooled;
    else if (mode == "het") m.variance = VarianceMode::heterogeneous;
    else throw std::invalid_argument("unknown variance mode '" + std::string(mode) + "'");
  }
  struct Entry {
    std::string_view name;
    Family family;
    Calibration calibration;
  };
  static constexpr Entry kTable[] = {
      {"unadj", Family::anova, Calibration::unadjusted},
      {"anova+t", Family::anova, Calibration::analytic},
      {"anova+boot", Family::anova, Calibration::bootstrap},
      {"marg+t", Family::marginal, Calibration::analytic},
      {"marg+boot", Family::marginal, Calibration::bootstrap},
      {"marg+shr+boot", Family::marginal_shrunk, Calibration::bootstrap},
      {"strat+boot", Family::stratified, Calibration::bootstrap},
      {"marg+unadj", Family::marginal, Calibration::unadjusted},
      {"marg+shr+unadj", Family::marginal_shrunk, Calibration::unadjusted},
      {"strat+unadj", Family::stratified, Calibration::unadjusted},
  };
  for (const auto& e : kTable) {
    if (e.name == head) {
      m.family = e.family;
      m.calibration = e.calibration;
      m.validate();
      return m;
    }
  }
  throw std::invalid_argument("unknown method '" + std::string(text) + "'");
}

ResolvedVariance resolve_variance(const TrialSummary& summary, VarianceMode mode) {
  switch (mode) {
    case VarianceMode::known:
      if (!summary.known_variance) throw std::invalid_argument("known variance requested but not supplied");
      return {*summary.known_variance, std::nullopt};
    case VarianceMode::pooled: {
      const PooledVariance pv = pooled_variance(summary);
      if (!(pv.variance > 0.0)) throw DegenerateSampleError("pooled variance is zero");
      return {pv.variance, pv.df};
    }
    case VarianceMode::heterogeneous:
      break;
  }
  throw std::invalid_argument("heterogeneous mode has no common variance");
}

CorrelationMatrix anova_correlation(const SampleLayout& layout, const TrialDesign& design) {
  const int np = design.n_populations();
  std::vector<double> ne(np), nc(np);
  for (int p = 0; p < np; ++p) {
    ne[p] = layout.population_treatment_size(design, p, design.treatment(p));
    nc[p] = layout.population_treatment_size(design, p, TrialDesign::kControl);
    if (!(ne[p] > 0.0) || !(nc[p] > 0.0)) throw DegenerateSampleError("empty population-treatment cell");
  }
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(np, np);
  for (int a = 0; a < np; ++a) {
    const double va = 1.0 / ne[a] + 1.0 / nc[a];
    for (int b = a + 1; b < np; ++b) {
      const double vb = 1.0 / ne[b] + 1.0 / nc[b];
      const bool same = design.treatment(a) == design.treatment(b);
      double cov = 0.0;
      for (int i : design.members(a)) {
        if (!design.contains(b, i)) continue;
        if (same) cov += layout.size(i, design.treatment(a)) / (ne[a] * ne[b]);
        cov += layout.size(i, TrialDesign::kControl) / (nc[a] * nc[b]);
      }
      m(a, b) = m(b, a) = cov / std::sqrt(va * vb);
    }
  }
  return CorrelationMatrix(m);
}

StatVector anova_statistics(const TrialSummary& summary, const TrialDesign& design, VarianceMode mode) {
  if (mode == VarianceMode::heterogeneous) throw std::invalid_argument("anova statistics assume a common variance");
  const ResolvedVariance rv = resolve_variance(summary, mode);
  const int np = design.n_populations();
  StatVector out;
  out.z.resize(np);
  out.se.resize(np);
  out.estimate.resize(np);
  for (int p = 0; p < np; ++p) {
    const int e = design.treatment(p);
    const double ne = summary.layout.population_treatment_size(design, p, e);
    const double nc = summary.layout.population_treatment_size(design, p, TrialDesign::kControl);
    const double diff = population_mean(design, summary, p, e) - population_mean(design, summary, p, TrialDesign::kControl);
    out.estimate[p] = diff;
    out.se[p] = std::sqrt(rv.sigma2 * (1.0 / ne + 1.0 / nc));
    out.z[p] = diff / out.se[p];
  }
  if (rv.df) out.df.assign(np, *rv.df);
  out.corr = anova_correlation(summary.layout, design);
  return out;
}

std::vector<double> anova_noncentrality(const SampleLayout& layout, const TrialDesign& design,
                                        const PopulationModel& model, double sigma2) {
  const int np = design.n_populations();
  std::vector<double> nu(np);
  for (int p = 0; p < np; ++p) {
    const int e = design.treatment(p);
    double ne = 0.0, nc = 0.0, se = 0.0, sc = 0.0;
    for (int i : design.members(p)) {
      const double a = layout.size(i, e), b = layout.size(i, TrialDesign::kControl);
      ne += a;
      nc += b;
      se += a * model.mean(design.cell(i, e));
      sc += b * model.mean(design.cell(i, TrialDesign::kControl));
    }
    if (!(ne > 0.0) || !(nc > 0.0)) throw DegenerateSampleError("empty population-treatment cell");
    nu[p] = (se / ne - sc / nc) / std::sqrt(sigma2 * (1.0 / ne + 1.0 / nc));
  }
  return nu;
}

double satterthwaite_df(double var_e, double n_e, double var_c, double n_c) {
  if (!(n_e > 1.0) || !(n_c > 1.0)) throw std::invalid_argument("Satterthwaite df needs more than one observation per arm");
  if (!(var_e > 0.0) || !(var_c > 0.0)) throw std::invalid_argument("Satterthwaite df needs positive variances");
  const double a = var_e / n_e, b = var_c / n_c;
  return (a + b) * (a + b) / (a * a / (n_e - 1.0) + b * b / (n_c - 1.0));
}

StatVector marginal_statistics(const TrialSummary& summary, const TrialDesign& design, VarianceMode mode) {
  const auto& layout = summary.layout;
  const int np = design.n_populations();
  StatVector out;
  out.z.resize(np);
  out.se.resize(np);
  out.estimate.resize(np);
  out.df.resize(np);
  std::vector<double> model_v(np);
  for (int p = 0; p < np; ++p) {
    const int arms[2] = {design.treatment(p), TrialDesign::kControl};
    double n[2], mean[2], var[2];
    for (int k = 0; k < 2; ++k) {
      const int t = arms[k];
      n[k] = layout.population_treatment_size(design, p, t);
      if (!(n[k] >= 2.0)) throw DegenerateSampleError("marginal test needs two observations per population arm");
      mean[k] = population_mean(design, summary, p, t);
      double ss = 0.0;
      for (int i : design.members(p)) {
        const int c = design.cell(i, t);
        const double d = summary.means[c] - mean[k];
        ss += summary.ss[c] + layout.size(c) * d * d;
      }
      var[k] = ss / (n[k] - 1.0);
      if (!(var[k] > 0.0)) throw DegenerateSampleError("population variance estimate is zero");
    }
    out.estimate[p] = mean[0] - mean[1];
    out.se[p] = std::sqrt(var[0] / n[0] + var[1] / n[1]);
    out.z[p] = out.estimate[p] / out.se[p];
    out.df[p] = satterthwaite_df(var[0], n[0], var[1], n[1]);
  }

  if (mode != VarianceMode::heterogeneous) {
    out.corr = anova_correlation(layout, design);
    return out;
  }
  std::vector<double> cell_var(layout.sizes().size(), 0.0);
  for (int p = 0; p < np; ++p) {
    for (int i : design.members(p)) {
      for (int t : {design.treatment(p), TrialDesign::kControl}) {
        const int c = design.cell(i, t);
        if (!(layout.size(c) >= 2.0))
          throw DegenerateSampleError("heterogeneous variances need two observations per cell");
        cell_var[c] = summary.ss[c] / (layout.size(c) - 1.0);
      }
    }
  }
  std::vector<double> ne(np), nc(np), v(np, 0.0);
  for (int p = 0; p < np; ++p) {
    const int e = design.treatment(p);
    ne[p] = layout.population_treatment_size(design, p, e);
    nc[p] = layout.population_treatment_size(design, p, TrialDesign::kControl);
    for (int i : design.members(p)) {
      v[p] += layout.size(i, e) * cell_var[design.cell(i, e)] / (ne[p] * ne[p]);
      v[p] += layout.size(i, TrialDesign::kControl) * cell_var[design.cell(i, TrialDesign::kControl)] / (nc[p] * nc[p]);
    }
    if (!(v[p] > 0.0)) throw DegenerateSampleError("zero within-cell variance");
  }
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(np, np);
  for (int a = 0; a < np; ++a) {
    for (int b = a + 1; b < np; ++b) {
      const bool same = design.treatment(a) == design.treatment(b);
      double cov = 0.0;
      for (int i : design.members(a)) {
        if (!design.contains(b, i)) continue;
        const int ce = design.cell(i, design.treatment(a)), cc = design.cell(i, TrialDesign::kControl);
        if (same) cov += layout.size(ce) * cell_var[ce] / (ne[a] * ne[b]);
        cov += layout.size(cc) * cell_var[cc] / (nc[a] * nc[b]);
      }
      m(a, b) = m(b, a) = cov / std::sqrt(v[a] * v[b]);
    }
  }
  out.corr = CorrelationMatrix(m);
  return out;
}

std::vector<double> marginal_critical_values(const StatVector& stats, double alpha, double tol, RngStream& rng) {
  if (!stats.corr) throw std::invalid_argument("marginal critical values need a correlation matrix");
  if (static_cast<int>(stats.df.size()) != stats.size())
    throw std::invalid_argument("marginal critical values need per-population df");
  std::vector<double> c(stats.size());
  for (int i = 0; i < stats.size(); ++i) c[i] = equicoordinate_quantile(*stats.corr, alpha, stats.df[i], tol, rng);
  return c;
}

std::vector<double> james_stein_shrink(std::span<const double> cell_means, std::span<const double> cell_sizes,
                                       double sigma2) {
  if (cell_means.size() != cell_sizes.size()) throw std::invalid_argument("means and sizes differ in length");
  if (cell_means.size() < 3) throw std::invalid_argument("James-Stein shrinkage needs at least three strata");
  if (!(sigma2 > 0.0)) throw std::invalid_argument("sigma2 must be positive");
  std::vector<double> out(cell_means.size());
  Shrink::apply(cell_means.data(), cell_sizes.data(), static_cast<int>(cell_means.size()), sigma2, out.data());
  return out;
}

double shrunk_population_variance(std::span<const double> shrunk_means, std::span<const double> cell_sizes,
                                  double sigma2) {
  if (shrunk_means.size() != cell_sizes.size() || shrunk_means.empty())
    throw std::invalid_argument("means and sizes must be nonempty and of equal length");
  double tot = 0.0;
  for (double n : cell_sizes) tot += n;
  if (!(tot > 0.0)) throw DegenerateSampleError("empty population-treatment cell");
  return weighted_spread(shrunk_means.data(), cell_sizes.data(), static_cast<int>(shrunk_means.size())) + sigma2;
}

StatKernel::StatKernel(const TrialDesign& design) {
  for (int p = 0; p < design.n_populations(); ++p) {
    Pop pop;
    const int e = design.treatment(p);
    for (int i : design.members(p)) {
      pop.strata.push_back(i);
      pop.cell_e.push_back(design.cell(i, e));
      pop.cell_c.push_back(design.cell(i, TrialDesign::kControl));
      std::vector<int> cells;
      for (int t : design.treatments_of(i)) cells.push_back(design.cell(i, t));
      pop.stratum_cells.push_back(std::move(cells));
    }
    pops_.push_back(std::move(pop));
  }
}

void StatKernel::anova(const Pop& p, const double* n, const double* ybar, double sigma2, double& est,
                       double& se) const {
  double ne = 0.0, nc = 0.0, se_ = 0.0, sc = 0.0;
  for (std::size_t k = 0; k < p.strata.size(); ++k) {
    ne += n[p.cell_e[k]];
    nc += n[p.cell_c[k]];
    se_ += n[p.cell_e[k]] * ybar[p.cell_e[k]];
    sc += n[p.cell_c[k]] * ybar[p.cell_c[k]];
  }
  est = se_ / ne - sc / nc;
  se = std::sqrt(sigma2 * (1.0 / ne + 1.0 / nc));
}

void StatKernel::marginal(const Pop& p, const double* n, const double* ybar, double sigma2, bool shrink,
                          double& est, double& se) const {
  const int k = static_cast<int>(p.strata.size());
  if (shrink && k < 3) {
    anova(p, n, ybar, sigma2, est, se);
    return;
  }
  double m[2][16], w[2][16], sh[16];
  std::vector<double> heap;
  double* mp[2];
  double* wp[2];
  double* shp = sh;
  if (k <= 16) {
    mp[0] = m[0];
    mp[1] = m[1];
    wp[0] = w[0];
    wp[1] = w[1];
  } else {
    heap.resize(5 * static_cast<std::size_t>(k));
    mp[0] = heap.data();
    mp[1] = mp[0] + k;
    wp[0] = mp[1] + k;
    wp[1] = wp[0] + k;
    shp = wp[1] + k;
  }
  double tot[2] = {0.0, 0.0}, mean[2] = {0.0, 0.0};
  for (int j = 0; j < k; ++j) {
    const int ce = p.cell_e[j], cc = p.cell_c[j];
    mp[0][j] = ybar[ce];
    wp[0][j] = n[ce];
    mp[1][j] = ybar[cc];
    wp[1][j] = n[cc];
    for (int a = 0; a < 2; ++a) {
      tot[a] += wp[a][j];
      mean[a] += wp[a][j] * mp[a][j];
    }
  }
  double var[2];
  for (int a = 0; a < 2; ++a) {
    mean[a] /= tot[a];
    if (shrink) {
      Shrink::apply(mp[a], wp[a], k, sigma2, shp);
      var[a] = weighted_spread(shp, wp[a], k) + sigma2;
    } else {
      var[a] = weighted_spread(mp[a], wp[a], k) + sigma2;
    }
  }
  est = mean[0] - mean[1];
  se = std::sqrt(var[0] / tot[0] + var[1] / tot[1]);
}

void StatKernel::stratified(const Pop& p, const double* n, const double* ybar, double sigma2, double& est,
                            double& se) const {
  const std::size_t k = p.strata.size();
  double np = 0.0, acc = 0.0, within = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    double ni = 0.0;
    for (int c : p.stratum_cells[j]) ni += n[c];
    np += ni;
    acc += ni * (ybar[p.cell_e[j]] - ybar[p.cell_c[j]]);
    within += ni * (ni / n[p.cell_e[j]] + ni / n[p.cell_c[j]]);
  }
  est = acc / np;
  double between = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    double ni = 0.0;
    for (int c : p.stratum_cells[j]) ni += n[c];
    const double d = ybar[p.cell_e[j]] - ybar[p.cell_c[j]] - est;
    between += ni * d * d;
  }
  se = std::sqrt(sigma2 * within + between) / np;
}

void StatKernel::compute(Family family, const double* n, const double* ybar, double sigma2, double* est,
                         double* se) const {
  for (std::size_t i = 0; i < pops_.size(); ++i) {
    const Pop& p = pops_[i];
    switch (family) {
      case Family::anova: anova(p, n, ybar, sigma2, est[i], se[i]); break;
      case Family::marginal: marginal(p, n, ybar, sigma2, false, est[i], se[i]); break;
      case Family::marginal_shrunk: marginal(p, n, ybar, sigma2, true, est[i], se[i]); break;
      case Family::stratified: stratified(p, n, ybar, sigma2, est[i], se[i]); break;
    }
  }
}

namespace {

StatVector kernel_statistics(const TrialSummary& summary, const TrialDesign& design, Family family,
                             VarianceMode mode) {
  if (mode == VarianceMode::heterogeneous)
    throw std::invalid_argument("this statistic family assumes a common variance");
  const ResolvedVariance rv = resolve_variance(summary, mode);
  require_cells(design, summary.layout, 1e-300);
  for (int p = 0; p < design.n_populations(); ++p) {
    if (!(summary.layout.population_treatment_size(design, p, design.treatment(p)) >= 1.0) ||
        !(summary.layout.population_treatment_size(design, p, TrialDesign::kControl) >= 1.0))
      throw DegenerateSampleError("empty population-treatment cell");
  }
  const int np = design.n_populations();
  StatVector out;
  out.z.resize(np);
  out.se.resize(np);
  out.estimate.resize(np);
  StatKernel kernel(design);
  kernel.compute(family, summary.layout.sizes().data(), summary.means.data(), rv.sigma2, out.estimate.data(),
                 out.se.data());
  for (int p = 0; p < np; ++p) {
    if (!(out.se[p] > 0.0) || !std::isfinite(out.se[p])) throw DegenerateSampleError("invalid standard error");
    out.z[p] = out.estimate[p] / out.se[p];
  }
  return out;
}

}  // namespace

StatVector shrunk_statistics(const TrialSummary& summary, const TrialDesign& design, VarianceMode mode) {
  return kernel_statistics(summary, design, Family::marginal_shrunk, mode);
}

StatVector stratified_statistics(const TrialSummary& summary, const TrialDesign& design, VarianceMode mode) {
  return kernel_statistics(summary, design, Family::stratified, mode);
}

StatVector compute_statistics(const TrialSummary& summary, const TrialDesign& design, const MethodSpec& method) {
  method.validate();
  switch (method.family) {
    case Family::anova: return anova_statistics(summary, design, method.variance);
    case Family::marginal: return marginal_statistics(summary, design, method.variance);
    case Family::marginal_shrunk: return shrunk_statistics(summary, design, method.variance);
    case Family::stratified: return stratified_statistics(summary, design, method.variance);
  }
  throw std::invalid_argument("unknown family");
}

TestResult analytic_test(const StatVector& stats, const MethodSpec& method, double alpha, double tol,
                         RngStream& rng) {
  if (method.calibration != Calibration::analytic) throw std::invalid_argument("method is not analytically calibrated");
  if (method.family != Family::anova && method.family != Family::marginal)
    throw std::invalid_argument("analytic calibration is defined for the anova and marginal families only");
  if (!stats.corr) throw std::invalid_argument("analytic calibration needs a correlation matrix");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  const int np = stats.size();
  const int d = stats.corr->dim();
  TestResult res;
  res.method = method.name();
  res.alpha = alpha;
  res.hypotheses.resize(np);

  auto fill = [&](int i, EquicoordinateCdf& f) {
    HypothesisResult& h = res.hypotheses[i];
    h.statistic = stats.z[i];
    h.se = stats.se[i];
    h.estimate = stats.estimate[i];
    h.critical_value = f.quantile(alpha);
    h.adjusted_p = std::clamp(f.exceedance(stats.z[i]), 0.0, 1.0);
    h.reject = stats.z[i] > *h.critical_value;
  };

  if (method.family == Family::anova) {
    const auto df = df_at(stats, 0);
    EquicoordinateCdf f(*stats.corr, df, EquicoordinateCdf::bracket_mid(d, alpha, df), tol, rng);
    for (int i = 0; i < np; ++i) fill(i, f);
  } else {
    for (int i = 0; i < np; ++i) {
      const auto df = df_at(stats, i);
      EquicoordinateCdf f(*stats.corr, df, EquicoordinateCdf::bracket_mid(d, alpha, df), tol, rng);
      fill(i, f);
    }
  }
  return res;
}

TestResult unadjusted_test(const StatVector& stats, const MethodSpec& method, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  TestResult res;
  res.method = method.name();
  res.alpha = alpha;
  res.hypotheses.resize(stats.size());
  for (int i = 0; i < stats.size(); ++i) {
    HypothesisResult& h = res.hypotheses[i];
    const auto df = df_at(stats, i);
    h.statistic = stats.z[i];
    h.se = stats.se[i];
    h.estimate = stats.estimate[i];
    h.critical_value = univariate_quantile(1.0 - alpha, df);
    h.adjusted_p = univariate_sf(stats.z[i], df);
    h.reject = stats.z[i] > *h.critical_value;
  }
  return res;
}

void analytic_decisions(const StatVector& stats, const MethodSpec& method, double alpha, double tol, RngStream& rng,
                        std::span<char> reject) {
  if (static_cast<int>(reject.size()) != stats.size()) throw std::invalid_argument("reject span has the wrong size");
  if (method.calibration == Calibration::unadjusted) {
    for (int i = 0; i < stats.size(); ++i)
      reject[i] = stats.z[i] > univariate_quantile(1.0 - alpha, df_at(stats, i));
    return;
  }
  if (method.calibration != Calibration::analytic || !stats.corr)
    throw std::invalid_argument("analytic decisions need an analytic method and a correlation matrix");
  const int d = stats.corr->dim();
  std::optional<double> last_df;
  double lo = 0.0, hi = 0.0;
  bool have_bounds = false;
  for (int i = 0; i < stats.size(); ++i) {
    const auto df = df_at(stats, i);
    if (!have_bounds || df != last_df) {
      lo = univariate_quantile(1.0 - alpha, df);
      hi = univariate_quantile(1.0 - alpha / d, df);
      last_df = df;
      have_bounds = true;
    }
    const double z = stats.z[i];
    if (z <= lo) {
      reject[i] = 0;
    } else if (z > hi) {
      reject[i] = 1;
    } else {
      reject[i] = max_exceedance_prob(z, *stats.corr, df, tol, rng) <= alpha;
    }
  }
}

}  // namespace fwer
