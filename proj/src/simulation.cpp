#include "fwer/simulation.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "fwer/errors.hpp"
#include "fwer/mvn.hpp"

namespace fwer {

namespace {

constexpr int kOverlapSubgroup = 1;
constexpr int kMaxLayoutRedraws = 1000;
constexpr int kMaxRunAttempts = 100;
constexpr long kMaxAltAttempts = 1000000;

double population_effect_sum(const TrialDesign& d, const std::array<double, 3>& prev,
                             const std::array<double, 3>& eff, int p) {
  double s = 0.0;
  for (int i : d.members(p)) s += prev[i] * eff[i];
  return s;
}

// Statistics shared by methods with the same family and variance mode.
struct StatCache {
  struct Entry {
    Family family;
    VarianceMode variance;
    StatVector stats;
  };
  std::vector<Entry> entries;

  const StatVector& get(const TrialSummary& s, const TrialDesign& d, const MethodSpec& m) {
    for (const auto& e : entries)
      if (e.family == m.family && e.variance == m.variance) return e.stats;
    entries.push_back({m.family, m.variance, compute_statistics(s, d, m)});
    return entries.back().stats;
  }
};

struct BootGroup {
  VarianceMode variance;  // mode used to resolve the resampling variance
  std::vector<Family> families;
};

std::vector<BootGroup> bootstrap_groups(const std::vector<MethodSpec>& methods) {
  std::vector<BootGroup> groups;
  for (const auto& m : methods) {
    if (m.calibration != Calibration::bootstrap) continue;
    const VarianceMode v = m.variance == VarianceMode::heterogeneous ? VarianceMode::pooled : m.variance;
    auto it = std::find_if(groups.begin(), groups.end(), [&](const BootGroup& g) { return g.variance == v; });
    if (it == groups.end()) {
      groups.push_back({v, {}});
      it = groups.end() - 1;
    }
    if (std::find(it->families.begin(), it->families.end(), m.family) == it->families.end())
      it->families.push_back(m.family);
  }
  return groups;
}

// Rejection flags for every method on one dataset; flags is method-major.
void decide_all(const ScenarioSpec& spec, const TrialDesign& design, const TrialSummary& summary,
                const std::vector<BootGroup>& groups, RngStream& run, std::uint64_t attempt,
                std::vector<char>& flags) {
  const int np = design.n_populations();
  StatCache cache;
  std::vector<BootstrapSample> boots;
  BootstrapConfig cfg;
  cfg.n_boot = spec.n_boot;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    RngStream br = run.child({stream_tag::kBootstrap, attempt, static_cast<std::uint64_t>(g)});
    const double sigma2 = resolve_variance(summary, groups[g].variance).sigma2;
    boots.push_back(bootstrap_distribution(summary, design, groups[g].families, sigma2, cfg, br));
  }
  for (std::size_t k = 0; k < spec.methods.size(); ++k) {
    const MethodSpec& m = spec.methods[k];
    const StatVector& st = cache.get(summary, design, m);
    std::span<char> out(flags.data() + k * np, np);
    if (m.calibration == Calibration::bootstrap) {
      const VarianceMode v = m.variance == VarianceMode::heterogeneous ? VarianceMode::pooled : m.variance;
      std::size_t g = 0;
      while (groups[g].variance != v) ++g;
      const double c = bootstrap_critical_value(boots[g].max_for(m.family), spec.alpha);
      for (int p = 0; p < np; ++p) out[p] = st.z[p] > c;
    } else {
      RngStream qr = run.child({stream_tag::kQmc, attempt, static_cast<std::uint64_t>(k)});
      analytic_decisions(st, m, spec.alpha, spec.tol, qr, out);
    }
  }
}

std::vector<double> simulate_runs(const StudyConfig& study, const ScenarioSpec& spec, RngStream& rng,
                                  SimTarget target, long* layout_redraws, long* failed_runs) {
  spec.validate();
  const TrialDesign design = make_design(spec.structure);
  const PopulationModel model = study.model(design, spec.sigma2);
  const int np = design.n_populations();
  const std::size_t nm = spec.methods.size();
  const auto groups = bootstrap_groups(spec.methods);
  std::vector<double> acc(nm, 0.0);
  std::vector<char> flags(nm * np);

  for (int r = 0; r < spec.n_runs; ++r) {
    RngStream run = rng.child({stream_tag::kRun, static_cast<std::uint64_t>(r)});
    RngStream lay_rng = run.child(stream_tag::kLayout);
    bool done = false;
    for (int attempt = 0; attempt < kMaxRunAttempts && !done; ++attempt) {
      int redraws = 0;
      const SampleLayout layout =
          draw_layout(design, study.prevalences, spec.n, spec.allocation, spec.split, lay_rng, &redraws);
      if (layout_redraws) *layout_redraws += redraws;
      RngStream data = run.child({stream_tag::kData, static_cast<std::uint64_t>(attempt)});
      const TrialSummary summary = draw_summary(design, layout, model, data);
      try {
        decide_all(spec, design, summary, groups, run, static_cast<std::uint64_t>(attempt), flags);
        done = true;
      } catch (const Error&) {
        if (failed_runs) ++*failed_runs;
      }
    }
    if (!done) throw GenerationError("run " + std::to_string(r) + " failed on every attempt");
    for (std::size_t k = 0; k < nm; ++k) {
      int rejected = 0;
      for (int p = 0; p < np; ++p) rejected += flags[k * np + p] != 0;
      acc[k] += target == SimTarget::fwer ? (rejected > 0 ? 1.0 : 0.0) : static_cast<double>(rejected) / np;
    }
  }
  for (double& a : acc) a /= spec.n_runs;
  return acc;
}

}  // namespace

std::string to_string(Structure s) { return s == Structure::nested ? "nested" : "overlapping"; }

std::string to_string(Allocation a) {
  switch (a) {
    case Allocation::A: return "A";
    case Allocation::B: return "B";
    case Allocation::C: return "C";
    case Allocation::D: return "D";
  }
  return "?";
}

Structure parse_structure(const std::string& text) {
  if (text == "nested") return Structure::nested;
  if (text == "overlapping") return Structure::overlapping;
  throw std::invalid_argument("unknown structure '" + text + "'");
}

Allocation parse_allocation(const std::string& text) {
  if (text == "A") return Allocation::A;
  if (text == "B") return Allocation::B;
  if (text == "C") return Allocation::C;
  if (text == "D") return Allocation::D;
  throw std::invalid_argument("unknown allocation pattern '" + text + "'");
}

AllocationSplit parse_split(const std::string& text) {
  if (text == "proportional") return AllocationSplit::proportional;
  if (text == "rounded") return AllocationSplit::rounded;
  throw std::invalid_argument("unknown allocation split '" + text + "'");
}

TrialDesign make_design(Structure s) {
  if (s == Structure::nested) return TrialDesign(3, {{0, 1, 2}, {1, 2}}, {"E", "E"});
  return TrialDesign(3, {{0, 1}, {1, 2}}, {"E", "E"});
}

void ScenarioSpec::validate() const {
  if (!(ehf >= 0.0) || !(chf >= 0.0)) throw std::invalid_argument("EHF and CHF must be nonnegative");
  if (n < 1) throw std::invalid_argument("N must be positive");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  if (!(sigma2 > 0.0)) throw std::invalid_argument("sigma2 must be positive");
  if (n_studies < 1 || n_runs < 1 || n_boot < 1) throw std::invalid_argument("replication counts must be positive");
  if (!(tol > 0.0)) throw std::invalid_argument("tol must be positive");
  if (methods.empty()) throw std::invalid_argument("no methods requested");
  for (const auto& m : methods) m.validate();
}

PopulationModel StudyConfig::model(const TrialDesign& design, double sigma2) const {
  std::vector<double> means(design.n_cells(), 0.0);
  for (int i = 0; i < design.n_subgroups(); ++i) {
    for (int t : design.treatments_of(i)) {
      means[design.cell(i, t)] = control_means[i] + (t == TrialDesign::kControl ? 0.0 : effects[i]);
    }
  }
  return PopulationModel::homogeneous(design, {prevalences.begin(), prevalences.end()}, means, sigma2);
}

std::array<double, 3> gen_prevalences(RngStream& rng) {
  while (true) {
    std::array<double, 3> u{rng.uniform_open(), rng.uniform_open(), rng.uniform_open()};
    const double s = u[0] + u[1] + u[2];
    if (!(s > 0.0)) continue;
    for (double& x : u) x /= s;
    // Renormalise the last component so the sum is one to the last bit.
    u[2] = 1.0 - u[0] - u[1];
    if (u[2] > 0.0) return u;
  }
}

std::array<double, 3> gen_null_effects(const std::array<double, 3>& prevalences, Structure s, double ehf,
                                       RngStream& rng) {
  if (!(ehf >= 0.0)) throw std::invalid_argument("EHF must be nonnegative");
  const TrialDesign d = make_design(s);
  const double seed_effect = (2.0 * rng.uniform() - 1.0) * ehf;
  std::array<double, 3> eff{0.0, 0.0, 0.0};
  eff[kOverlapSubgroup] = seed_effect;

  // Unknowns: the other subgroups; one equation per population.
  std::vector<int> unknown;
  for (int i = 0; i < 3; ++i)
    if (i != kOverlapSubgroup) unknown.push_back(i);
  const int np = d.n_populations();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(np, static_cast<int>(unknown.size()));
  Eigen::VectorXd b(np);
  for (int p = 0; p < np; ++p) {
    b(p) = d.contains(p, kOverlapSubgroup) ? -prevalences[kOverlapSubgroup] * seed_effect : 0.0;
    for (std::size_t k = 0; k < unknown.size(); ++k)
      if (d.contains(p, unknown[k])) a(p, static_cast<int>(k)) = prevalences[unknown[k]];
  }
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
  if (lu.rank() != static_cast<int>(unknown.size())) throw GenerationError("null effect system is not uniquely solvable");
  const Eigen::VectorXd x = lu.solve(b);
  for (std::size_t k = 0; k < unknown.size(); ++k) eff[unknown[k]] = x(static_cast<int>(k));
  for (int p = 0; p < np; ++p) {
    if (std::abs(population_effect_sum(d, prevalences, eff, p)) > 1e-10 * (1.0 + ehf))
      throw GenerationError("null effect system has no solution");
  }
  return eff;
}

std::array<double, 3> gen_alt_effects(const std::array<double, 3>& prevalences, Structure s, double ehf,
                                      RngStream& rng, long* attempts) {
  if (!(ehf > 0.0)) throw std::invalid_argument("alternative effects need EHF > 0");
  const TrialDesign d = make_design(s);
  for (long k = 1; k <= kMaxAltAttempts; ++k) {
    std::array<double, 3> eff;
    for (double& e : eff) e = (2.0 * rng.uniform() - 1.0) * ehf;
    bool ok = true;
    for (int p = 0; p < d.n_populations() && ok; ++p) ok = population_effect_sum(d, prevalences, eff, p) > 0.0;
    if (ok) {
      if (attempts) *attempts = k;
      return eff;
    }
  }
  throw GenerationError("no alternative effect vector found");
}

std::array<double, 3> gen_control_means(double chf) { return {0.0, chf, 2.0 * chf}; }

SampleLayout draw_layout(const TrialDesign& design, std::span<const double> prevalences, int n,
                         Allocation allocation, AllocationSplit split, RngStream& rng, int* redraws) {
  if (n < 1) throw std::invalid_argument("N must be positive");
  const int s = design.n_subgroups();
  const int nt = design.n_treatments();
  if (static_cast<int>(prevalences.size()) != s) throw std::invalid_argument("one prevalence per subgroup");

  std::vector<char> in_all(s, 1);
  for (int i = 0; i < s; ++i)
    for (int p = 0; p < design.n_populations(); ++p)
      if (!design.contains(p, i)) in_all[i] = 0;

  std::vector<double> cell_probs;
  if (allocation == Allocation::D) {
    cell_probs.assign(design.n_cells(), 0.0);
    for (int i = 0; i < s; ++i) {
      const auto ts = design.treatments_of(i);
      for (int t : ts) cell_probs[design.cell(i, t)] = prevalences[i] / static_cast<double>(ts.size());
    }
  }

  std::vector<int> counts(allocation == Allocation::D ? design.n_cells() : s);
  std::vector<double> sizes(design.n_cells());
  for (int attempt = 0; attempt <= kMaxLayoutRedraws; ++attempt) {
    std::fill(sizes.begin(), sizes.end(), 0.0);
    if (allocation == Allocation::D) {
      multinomial_sample(rng, n, cell_probs, counts);
      for (int c = 0; c < design.n_cells(); ++c) sizes[c] = counts[c];
    } else {
      multinomial_sample(rng, n, prevalences, counts);
      for (int i = 0; i < s; ++i) {
        double ratio = 0.5;
        if (allocation == Allocation::B || (allocation == Allocation::C && in_all[i])) ratio = 2.0 / 3.0;
        const auto ts = design.treatments_of(i);
        const int ne = static_cast<int>(ts.size()) - 1;
        // Experimental arms share ratio of the stratum equally.
        const double total = counts[i];
        double assigned = 0.0;
        for (int t : ts) {
          if (t == TrialDesign::kControl) continue;
          double share = total * ratio / ne;
          if (split == AllocationSplit::rounded) share = std::nearbyint(share);
          sizes[design.cell(i, t)] = share;
          assigned += share;
        }
        sizes[design.cell(i, TrialDesign::kControl)] = total - assigned;
      }
    }
    bool ok = true;
    for (int i = 0; i < s && ok; ++i)
      for (int t = 0; t < nt && ok; ++t)
        if (design.cell_used(i, t) && !(sizes[design.cell(i, t)] > 0.0)) ok = false;
    if (ok) {
      if (redraws) *redraws = attempt;
      return SampleLayout(s, nt, sizes);
    }
  }
  throw GenerationError("layout redraw limit exceeded");
}

TrialSummary draw_summary(const TrialDesign& design, const SampleLayout& layout, const PopulationModel& model,
                          RngStream& rng) {
  TrialSummary out;
  out.layout = layout;
  out.means.assign(design.n_cells(), 0.0);
  out.ss.assign(design.n_cells(), 0.0);
  for (int c = 0; c < design.n_cells(); ++c) {
    const double n = layout.size(c);
    if (!(n > 0.0)) continue;
    const double v = model.variance(c);
    out.means[c] = model.mean(c) + std::sqrt(v / n) * rng.normal();
    out.ss[c] = n > 1.0 ? v * rng.chi_square(n - 1.0) : 0.0;
  }
  return out;
}

StudyConfig generate_study(const ScenarioSpec& spec, SimTarget target, int study) {
  RngStream root(spec.seed, {stream_tag::kStudy, static_cast<std::uint64_t>(target), static_cast<std::uint64_t>(study)});
  StudyConfig cfg;
  RngStream pr = root.child(stream_tag::kPrevalence);
  cfg.prevalences = gen_prevalences(pr);
  if (target == SimTarget::fwer) {
    RngStream er = root.child(stream_tag::kNullEffect);
    cfg.effects = gen_null_effects(cfg.prevalences, spec.structure, spec.ehf, er);
  } else {
    RngStream er = root.child(stream_tag::kAltEffect);
    cfg.effects = gen_alt_effects(cfg.prevalences, spec.structure, spec.ehf, er);
  }
  cfg.control_means = gen_control_means(spec.chf);
  return cfg;
}

StudyOutcome simulate_study(const ScenarioSpec& spec, SimTarget target, int study) {
  StudyOutcome out;
  try {
    const StudyConfig cfg = generate_study(spec, target, study);
    RngStream root(spec.seed, {stream_tag::kStudy, static_cast<std::uint64_t>(target), static_cast<std::uint64_t>(study)});
    out.rate = simulate_runs(cfg, spec, root, target, &out.layout_redraws, &out.failed_runs);
  } catch (const Error& e) {
    out.ok = false;
    out.error = e.what();
  }
  return out;
}

std::vector<double> simulate_fwer(const StudyConfig& study, const ScenarioSpec& spec, RngStream& rng) {
  const TrialDesign d = make_design(spec.structure);
  for (int p = 0; p < d.n_populations(); ++p)
    if (std::abs(population_effect_sum(d, study.prevalences, study.effects, p)) > 1e-10 * (1.0 + spec.ehf))
      throw std::invalid_argument("study does not satisfy the global null");
  return simulate_runs(study, spec, rng, SimTarget::fwer, nullptr, nullptr);
}

std::vector<double> simulate_power(const StudyConfig& study, const ScenarioSpec& spec, RngStream& rng) {
  return simulate_runs(study, spec, rng, SimTarget::power, nullptr, nullptr);
}

std::vector<ScenarioSpec> GridSpec::cells() const {
  std::vector<ScenarioSpec> out;
  for (int nn : n) {
    for (Allocation a : allocations) {
      for (double e : ehf) {
        for (double c : chf) {
          ScenarioSpec s;
          s.structure = structure;
          s.ehf = e;
          s.chf = c;
          s.n = nn;
          s.allocation = a;
          s.split = split;
          s.alpha = alpha;
          s.sigma2 = sigma2;
          s.n_studies = n_studies;
          s.n_runs = n_runs;
          s.n_boot = n_boot;
          s.tol = tol;
          s.methods = methods;
          s.seed = seed;
          s.validate();
          out.push_back(std::move(s));
        }
      }
    }
  }
  return out;
}

SimulationReport run_scenario_grid(const GridSpec& grid, int workers) {
  if (workers < 1) throw std::invalid_argument("workers must be positive");
  const std::vector<ScenarioSpec> cells = grid.cells();

  struct Task {
    std::size_t cell;
    SimTarget target;
    int study;
  };
  std::vector<Task> tasks;
  for (SimTarget target : {SimTarget::fwer, SimTarget::power}) {
    if (target == SimTarget::fwer && !grid.fwer) continue;
    if (target == SimTarget::power && !grid.power) continue;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (target == SimTarget::power && !(cells[c].ehf > 0.0)) continue;
      for (int s = 0; s < grid.n_studies; ++s) tasks.push_back({c, target, s});
    }
  }

  std::vector<StudyOutcome> outcomes(tasks.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t k = next++; k < tasks.size(); k = next++)
      outcomes[k] = simulate_study(cells[tasks[k].cell], tasks[k].target, tasks[k].study);
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  SimulationReport report;
  std::size_t k = 0;
  while (k < tasks.size()) {
    const Task& head = tasks[k];
    const ScenarioSpec& spec = cells[head.cell];
    std::size_t end = k;
    while (end < tasks.size() && tasks[end].cell == head.cell && tasks[end].target == head.target) ++end;
    for (std::size_t m = 0; m < spec.methods.size(); ++m) {
      CellResult r;
      r.n = spec.n;
      r.allocation = spec.allocation;
      r.ehf = spec.ehf;
      r.chf = spec.chf;
      r.method = spec.methods[m].name();
      r.n_runs = spec.n_runs;
      for (std::size_t j = k; j < end; ++j) {
        if (outcomes[j].ok) r.per_study.push_back(outcomes[j].rate[m]);
        else ++r.failed_studies;
      }
      r.n_studies = static_cast<int>(r.per_study.size());
      if (r.n_studies > 0) {
        double sum = 0.0;
        for (double v : r.per_study) sum += v;
        r.estimate = sum / r.n_studies;
        double ss = 0.0;
        for (double v : r.per_study) ss += (v - r.estimate) * (v - r.estimate);
        r.mc_se = r.n_studies > 1 ? std::sqrt(ss / (r.n_studies - 1) / r.n_studies) : 0.0;
      } else {
        r.estimate = std::nan("");
        r.mc_se = std::nan("");
      }
      (head.target == SimTarget::fwer ? report.fwer : report.power).push_back(std::move(r));
    }
    k = end;
  }
  return report;
}

namespace {

const std::array<double, 3> kExample1Prev = {1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0};
const std::array<double, 3> kExample1Effects = {0.0, 4.0, -1.0};
constexpr double kExample1Sigma2 = 0.25;
constexpr double kExample1Alpha = 0.025;

SampleLayout balanced_layout(const std::vector<int>& counts) {
  std::vector<double> sizes;
  for (int c : counts) {
    sizes.push_back(0.5 * c);
    sizes.push_back(0.5 * c);
  }
  return SampleLayout(static_cast<int>(counts.size()), 2, sizes);
}

}  // namespace

Example1Result example1_analytic(int n, int n_iter, RngStream& rng, double tol, bool zero_effects) {
  if (n < 2 || n_iter < 1) throw std::invalid_argument("example1 needs N >= 2 and at least one iteration");
  const TrialDesign design = make_design(Structure::nested);
  StudyConfig study;
  study.prevalences = kExample1Prev;
  if (!zero_effects) study.effects = kExample1Effects;
  const PopulationModel model = study.model(design, kExample1Sigma2);

  double sum = 0.0, sum2 = 0.0;
  for (int j = 0; j < n_iter; ++j) {
    RngStream r = rng.child(static_cast<std::uint64_t>(j));
    const std::vector<int> counts = multinomial_sample(r, n, kExample1Prev);
    const SampleLayout layout = balanced_layout(counts);
    const CorrelationMatrix corr = anova_correlation(layout, design);
    const double c = equicoordinate_quantile(corr, kExample1Alpha, std::nullopt, tol, r);
    const std::vector<double> nu = anova_noncentrality(layout, design, model, kExample1Sigma2);
    const double f = true_fwer_given_shift(nu, corr, c, tol, r);
    sum += f;
    sum2 += f * f;
  }
  Example1Result out;
  out.n = n;
  out.n_iter = n_iter;
  out.mean_fwer = sum / n_iter;
  const double var = n_iter > 1 ? (sum2 - n_iter * out.mean_fwer * out.mean_fwer) / (n_iter - 1) : 0.0;
  out.mc_se = std::sqrt(std::max(var, 0.0) / n_iter);
  return out;
}

NuVariances example1_nu_variances(int n, int n_draws, RngStream& rng) {
  if (n < 2 || n_draws < 2) throw std::invalid_argument("need N >= 2 and at least two draws");
  const TrialDesign design = make_design(Structure::nested);
  StudyConfig study;
  study.prevalences = kExample1Prev;
  study.effects = kExample1Effects;
  const PopulationModel model = study.model(design, kExample1Sigma2);
  double s1 = 0, s11 = 0, s2 = 0, s22 = 0;
  for (int j = 0; j < n_draws; ++j) {
    RngStream r = rng.child(static_cast<std::uint64_t>(j));
    const std::vector<double> nu =
        anova_noncentrality(balanced_layout(multinomial_sample(r, n, kExample1Prev)), design, model, kExample1Sigma2);
    s1 += nu[0];
    s11 += nu[0] * nu[0];
    s2 += nu[1];
    s22 += nu[1] * nu[1];
  }
  const double m1 = s1 / n_draws, m2 = s2 / n_draws;
  return {(s11 - n_draws * m1 * m1) / (n_draws - 1), (s22 - n_draws * m2 * m2) / (n_draws - 1)};
}

}  // namespace fwer
