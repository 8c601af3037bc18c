// End-to-end acceptance run. Prints one PASS/FAIL line per criterion, with
// the measured values on indented lines below it. Exit status is the number
// of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "fixtures.hpp"
#include "fwer/bootstrap.hpp"
#include "fwer/confidence.hpp"
#include "fwer/io.hpp"
#include "fwer/mvn.hpp"
#include "fwer/normal.hpp"
#include "fwer/procedures.hpp"
#include "fwer/simulation.hpp"
#include "oracles.hpp"

using namespace fwer;

namespace {

constexpr double kTol = 5e-4;
const std::vector<std::string> kTableMethods = {"anova+t",   "marg+t",        "anova+boot",
                                                "marg+boot", "marg+shr+boot", "strat+boot"};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int workers() { return std::max(1u, std::thread::hardware_concurrency()); }

struct Criterion {
  std::vector<std::string> lines;
  bool ok = true;

  void check(bool pass, const std::string& what) {
    ok = ok && pass;
    lines.push_back(std::string(pass ? "ok   " : "MISS ") + what);
  }
  void info(const std::string& what) { lines.push_back("info " + what); }
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string cell_text(const CellResult& c) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s N=%d EHF=%g CHF=%g: %.4f (se %.4f, %d studies)", c.method.c_str(), c.n, c.ehf,
                c.chf, c.estimate, c.mc_se, c.n_studies);
  return buf;
}

const CellResult& find_cell(const std::vector<CellResult>& cells, int n, double ehf, double chf,
                            const std::string& method) {
  for (const CellResult& c : cells)
    if (c.n == n && c.ehf == ehf && c.chf == chf && c.method == method) return c;
  throw std::runtime_error("missing cell " + method);
}

std::vector<MethodSpec> parse_methods(const std::vector<std::string>& names) {
  std::vector<MethodSpec> m;
  for (const auto& n : names) m.push_back(MethodSpec::parse(n));
  return m;
}

TestResult run_method(const TrialSummary& s, const TrialDesign& d, const MethodSpec& m, RngStream& rng,
                      int n_boot) {
  const StatVector st = compute_statistics(s, d, m);
  if (m.calibration == Calibration::analytic) return analytic_test(st, m, 0.025, kTol, rng);
  if (m.calibration == Calibration::unadjusted) return unadjusted_test(st, m, 0.025);
  BootstrapConfig cfg;
  cfg.n_boot = n_boot;
  const Family fam[] = {m.family};
  const BootstrapSample b = bootstrap_distribution(s, d, fam, resolve_variance(s, m.variance).sigma2, cfg, rng);
  return bootstrap_test(st, b.max_for(m.family), m, 0.025, PValueRule::plain);
}

TrialSummary random_trial(RngStream& rng, const TrialDesign& d, double effect_scale) {
  StudyConfig c;
  c.prevalences = {0.2 + 0.2 * rng.uniform(), 0.2 + 0.2 * rng.uniform(), 0.0};
  c.prevalences[2] = 1.0 - c.prevalences[0] - c.prevalences[1];
  for (int i = 0; i < 3; ++i) {
    c.effects[i] = effect_scale * (rng.uniform() - 0.3);
    c.control_means[i] = rng.normal();
  }
  const SampleLayout lay =
      draw_layout(d, {c.prevalences.begin(), c.prevalences.end()}, 120, Allocation::A, AllocationSplit::rounded, rng);
  return draw_summary(d, lay, c.model(d, 0.25), rng);
}

// ---------------------------------------------------------------------------

Criterion example1_fwer() {
  Criterion c;
  RngStream rng(101);
  const auto t0 = Clock::now();
  const Example1Result r = example1_analytic(500, 10000, rng, kTol);
  const double secs = seconds_since(t0);
  c.check(r.mean_fwer >= 0.17 && r.mean_fwer <= 0.20,
          fmt("mean true FWER at N=500 over 10^4 iterations = %.4f", r.mean_fwer) + fmt(" (se %.4f), target [0.17, 0.20]", r.mc_se));
  c.check(secs < 300.0, fmt("runtime %.1f s, limit 300 s", secs));
  return c;
}

Criterion nu_variances() {
  Criterion c;
  RngStream rng(102);
  const NuVariances v = example1_nu_variances(100000, 10000, rng);
  const double t1 = 10.0 / 3.0, t2 = 4.0;
  c.check(std::abs(v.var_nu1 / t1 - 1.0) <= 0.05, fmt("var(nu1) = %.4f, target 3.3333 +- 5%%", v.var_nu1));
  c.check(std::abs(v.var_nu2 / t2 - 1.0) <= 0.05, fmt("var(nu2) = %.4f, target 4 +- 5%%", v.var_nu2));
  return c;
}

GridSpec desk_grid(std::vector<int> n, std::vector<double> chf, bool power) {
  GridSpec g;
  g.structure = Structure::nested;
  g.ehf = {0.0, 1.0, 10.0};
  g.chf = std::move(chf);
  g.n = std::move(n);
  g.allocations = {Allocation::A};
  g.n_studies = 100;
  g.n_runs = 500;
  g.n_boot = 500;
  g.methods = parse_methods(kTableMethods);
  // Not a familywise procedure; reported for reference only.
  g.methods.push_back(MethodSpec::parse("unadj"));
  g.seed = 2024;
  g.fwer = true;
  g.power = power;
  return g;
}

Criterion table1(const SimulationReport& rep) {
  Criterion c;
  auto in = [](double x, double lo, double hi) { return x >= lo && x <= hi; };
  for (double chf : {0.0, 1.0, 10.0}) {
    const CellResult& a10 = find_cell(rep.fwer, 500, 10, chf, "anova+t");
    c.check(in(a10.estimate, 0.28, 0.35), cell_text(a10) + ", target [0.28, 0.35]");
  }
  for (double chf : {0.0, 1.0, 10.0}) {
    const CellResult& a0 = find_cell(rep.fwer, 500, 0, chf, "anova+t");
    c.check(in(a0.estimate, 0.020, 0.031), cell_text(a0) + ", target [0.020, 0.031]");
  }
  for (double chf : {0.0, 1.0, 10.0}) {
    const CellResult& b = find_cell(rep.fwer, 500, 10, chf, "anova+boot");
    c.check(in(b.estimate, 0.028, 0.040), cell_text(b) + ", target [0.028, 0.040]");
  }
  const CellResult& m = find_cell(rep.fwer, 500, 0, 10, "marg+t");
  c.check(m.estimate <= 0.002, cell_text(m) + ", target <= 0.002");
  for (double chf : {0.0, 1.0, 10.0}) {
    const CellResult& s = find_cell(rep.fwer, 500, 10, chf, "strat+boot");
    c.check(in(s.estimate, 0.033, 0.046), cell_text(s) + ", target [0.033, 0.046]");
  }
  for (double ehf : {0.0, 1.0, 10.0})
    for (double chf : {0.0, 1.0, 10.0})
      for (const auto& name : {"marg+boot", "marg+shr+boot"})
        c.info(cell_text(find_cell(rep.fwer, 500, ehf, chf, name)));
  return c;
}

Criterion table2(const SimulationReport& rep) {
  Criterion c;
  const CellResult& a = find_cell(rep.power, 500, 1, 0, "anova+t");
  c.check(a.estimate >= 0.96 && a.estimate <= 0.985, cell_text(a) + ", target [0.96, 0.985]");
  const CellResult& m = find_cell(rep.power, 500, 1, 10, "marg+t");
  c.check(m.estimate <= 0.15, cell_text(m) + ", target <= 0.15");
  for (double chf : {0.0, 1.0, 10.0}) {
    const CellResult& s = find_cell(rep.power, 500, 10, chf, "strat+boot");
    c.check(s.estimate >= 0.985 && s.estimate <= 0.999, cell_text(s) + ", target [0.985, 0.999]");
  }
  return c;
}

Criterion orderings(const SimulationReport& rep) {
  Criterion c;
  for (int n : {250, 1000}) {
    const double f0 = find_cell(rep.fwer, n, 0, 0, "anova+t").estimate;
    const double f1 = find_cell(rep.fwer, n, 1, 0, "anova+t").estimate;
    const double f10 = find_cell(rep.fwer, n, 10, 0, "anova+t").estimate;
    char buf[160];
    std::snprintf(buf, sizeof buf, "anova+t N=%d over EHF 0,1,10: %.4f < %.4f < %.4f", n, f0, f1, f10);
    c.check(f0 < f1 && f1 < f10, buf);
  }
  for (const auto& name : {"anova+boot", "marg+boot", "marg+shr+boot", "strat+boot"}) {
    const CellResult& lo = find_cell(rep.fwer, 250, 10, 0, name);
    const CellResult& hi = find_cell(rep.fwer, 1000, 10, 0, name);
    char buf[200];
    std::snprintf(buf, sizeof buf, "%s EHF=10: N=250 %.4f (se %.4f) > N=1000 %.4f (se %.4f)", name, lo.estimate,
                  lo.mc_se, hi.estimate, hi.mc_se);
    c.check(lo.estimate > hi.estimate, buf);
  }
  return c;
}

Criterion numerics_oracles() {
  Criterion c;
  const auto t0 = Clock::now();
  RngStream rng(106);
  const double inf = std::numeric_limits<double>::infinity();
  struct Case {
    std::string label;
    std::vector<double> upper;
    CorrelationMatrix corr;
    double exact;
  };
  std::vector<Case> cases;
  // Independence: the probability factorises.
  for (int d : {2, 3, 5}) {
    for (double u : {0.3, 1.7}) {
      std::vector<double> up(d);
      double prod = 1.0;
      for (int i = 0; i < d; ++i) {
        up[i] = u - 0.4 * i;
        prod *= norm_cdf(up[i]);
      }
      cases.push_back({"independent d=" + std::to_string(d) + fmt(" u=%g", u), up, CorrelationMatrix::identity(d), prod});
    }
  }
  // Perfect correlation: the smallest limit decides.
  for (int d : {2, 3}) {
    for (double u : {-0.5, 1.2}) {
      std::vector<double> up(d);
      for (int i = 0; i < d; ++i) up[i] = u + 0.3 * i;
      cases.push_back({"perfect d=" + std::to_string(d) + fmt(" u=%g", u), up,
                       CorrelationMatrix::equicorrelated(d, 1.0), norm_cdf(u)});
    }
  }
  // Equicorrelated: reduces to a one-dimensional integral.
  for (int d : {3, 4, 6}) {
    for (double rho : {0.2, 0.5, 0.8}) {
      std::vector<double> up(d);
      for (int i = 0; i < d; ++i) up[i] = 1.0 + 0.25 * i - 0.1 * d;
      cases.push_back({"equicorrelated d=" + std::to_string(d) + fmt(" rho=%g", rho), up,
                       CorrelationMatrix::equicorrelated(d, rho), oracle::equicorrelated_normal_cdf(up, rho)});
    }
  }
  // Orthant with one unbounded coordinate.
  cases.push_back({"equicorrelated orthant d=3 rho=0.5", {0.0, 0.0, inf}, CorrelationMatrix::equicorrelated(3, 0.5),
                   oracle::equicorrelated_normal_cdf({0.0, 0.0}, 0.5)});

  int bad = 0;
  double worst = 0.0;
  for (const Case& k : cases) {
    const double v = mv_normal_prob(k.upper, k.corr, kTol, rng).value;
    const double err = std::abs(v - k.exact);
    worst = std::max(worst, err);
    if (err > 2 * kTol) {
      ++bad;
      c.info(k.label + fmt(": error %.2e", err));
    }
  }
  c.check(cases.size() == 20 && bad == 0, std::to_string(cases.size()) + " closed-form cases, " +
                                              std::to_string(bad) + " outside 2*tol, worst error " +
                                              fmt("%.2e", worst));

  // Quantile inversion against the independent oracle.
  int qbad = 0;
  double qworst = 0.0;
  for (int d : {2, 3, 5}) {
    for (double rho : {0.0, 0.3, 0.8}) {
      const double alpha = 0.025;
      const double q = equicoordinate_quantile(CorrelationMatrix::equicorrelated(d, rho), alpha, std::nullopt, kTol, rng);
      const double exceed = 1.0 - oracle::equicorrelated_normal_cdf(std::vector<double>(d, q), rho);
      const double err = std::abs(exceed - alpha);
      qworst = std::max(qworst, err);
      qbad += err > kTol;
    }
  }
  c.check(qbad == 0, "quantile inversion on 9 cases, worst |P(max > c) - alpha| = " + fmt("%.2e", qworst));
  const double secs = seconds_since(t0);
  c.check(secs < 60.0, fmt("runtime %.1f s, limit 60 s", secs));
  return c;
}

double population_constraint(const TrialDesign& d, const SampleLayout& lay, const std::vector<double>& mu, int p) {
  double np = 0.0, acc = 0.0;
  for (int i : d.members(p)) np += lay.stratum_size(i);
  for (int i : d.members(p)) acc += lay.stratum_size(i) / np * (mu[d.cell(i, d.treatment(p))] - mu[d.cell(i, 0)]);
  return acc;
}

Criterion properties() {
  Criterion c;
  {
    RngStream rng(107);
    const std::vector<TrialDesign> designs = {
        fixture::nested(), TrialDesign(3, {{0, 1}, {1, 2}}, {"E", "E"}),
        TrialDesign(4, {{0, 1, 2, 3}, {1, 2}, {2, 3}, {0}}, {"E", "E", "F", "F"}),
        TrialDesign(2, {{0, 1}, {0}, {1}}, {"E", "E", "E"})};
    double worst_constraint = 0.0, worst_idem = 0.0;
    for (int rep = 0; rep < 1000; ++rep) {
      const TrialDesign& d = designs[rep % designs.size()];
      std::vector<double> sizes(d.n_cells(), 0.0), means(d.n_cells(), 0.0);
      for (int i = 0; i < d.n_subgroups(); ++i) {
        for (int t : d.treatments_of(i)) {
          sizes[d.cell(i, t)] = 1 + std::floor(30 * rng.uniform());
          means[d.cell(i, t)] = 3 * rng.normal();
        }
      }
      const SampleLayout lay(d.n_subgroups(), d.n_treatments(), sizes);
      const auto s = fixture::summary(lay, means, std::vector<double>(d.n_cells(), 0.0));
      const NullProjection p = project_to_null(s, d);
      for (int k = 0; k < d.n_populations(); ++k)
        worst_constraint = std::max(worst_constraint, std::abs(population_constraint(d, lay, p.means, k)));
      const auto again = project_to_null(fixture::summary(lay, p.means, s.ss), d);
      for (int k = 0; k < d.n_cells(); ++k) worst_idem = std::max(worst_idem, std::abs(again.means[k] - p.means[k]));
    }
    c.check(worst_constraint < 1e-10 && worst_idem < 1e-10,
            fmt("null projection on 10^3 instances: max constraint %.1e", worst_constraint) +
                fmt(", max idempotence gap %.1e", worst_idem));
  }
  {
    const TrialDesign d = fixture::nested();
    const double pi[3] = {0.2, 0.3, 0.5}, de[3] = {0.5, 0.6, 0.4}, theta[3] = {1.0, -1.0, 2.0};
    const int big_n = 400;
    std::vector<double> cs(3), es(3), means(6);
    for (int i = 0; i < 3; ++i) {
      cs[i] = big_n * pi[i] * (1 - de[i]);
      es[i] = big_n * pi[i] * de[i];
      means[2 * i + 1] = theta[i];
    }
    auto s = fixture::summary(fixture::two_arm(cs, es), means, std::vector<double>(6, 0.0));
    s.known_variance = 1.0;
    const double se = stratified_statistics(s, d, VarianceMode::known).se[0];
    RngStream rng(108);
    const int reps = 100000;
    double sum = 0, sum2 = 0;
    const std::vector<double> probs(pi, pi + 3);
    std::vector<int> counts(3);
    for (int r = 0; r < reps; ++r) {
      multinomial_sample(rng, big_n, probs, counts);
      double est = 0;
      for (int i = 0; i < 3; ++i) {
        const double ne = counts[i] * de[i], nc = counts[i] * (1 - de[i]);
        est += counts[i] * (theta[i] + rng.normal() / std::sqrt(ne) - rng.normal() / std::sqrt(nc));
      }
      est /= big_n;
      sum += est;
      sum2 += est * est;
    }
    const double var = sum2 / reps - (sum / reps) * (sum / reps);
    c.check(std::abs(se * se / var - 1.0) <= 0.03,
            fmt("stratified SE^2 / Monte Carlo variance = %.4f, target 1 +- 3%%", se * se / var));
  }
  {
    // Decisions from adjusted p-values and from critical values agree on
    // random data for every method.
    const TrialDesign d = fixture::nested();
    RngStream rng(109);
    long disagreements = 0, near_ties = 0, checked = 0;
    for (const auto& name : kTableMethods) {
      const MethodSpec m = MethodSpec::parse(name);
      for (int k = 0; k < 300; ++k) {
        const TestResult r = run_method(random_trial(rng, d, 0.6), d, m, rng, 200);
        for (const HypothesisResult& h : r.hypotheses) {
          ++checked;
          if ((*h.adjusted_p <= 0.025) == h.reject) continue;
          // The analytic root is found to a finite tolerance.
          if (std::abs(h.statistic - *h.critical_value) < 1e-6) ++near_ties;
          else ++disagreements;
        }
      }
    }
    c.check(disagreements == 0, "p-value vs critical-value decisions on " + std::to_string(checked) +
                                    " hypotheses: " + std::to_string(disagreements) + " disagreements, " +
                                    std::to_string(near_ties) + " within 1e-6 of c");
  }
  {
    const TrialDesign d = fixture::nested();
    RngStream rng(110);
    long mismatches = 0, rejections = 0, checked = 0;
    for (const auto& name : kTableMethods) {
      const MethodSpec m = MethodSpec::parse(name);
      for (int k = 0; k < 1000; ++k) {
        const TestResult r = run_method(random_trial(rng, d, 0.6), d, m, rng, 100);
        const ConfidenceSet cs = simultaneous_lower_bounds(r);
        for (std::size_t i = 0; i < cs.lower.size(); ++i) {
          ++checked;
          rejections += r.hypotheses[i].reject;
          mismatches += r.hypotheses[i].reject != (cs.lower[i] > 0.0);
        }
      }
    }
    c.check(mismatches == 0 && rejections > 0 && rejections < checked,
            "test/CI duality on " + std::to_string(checked) + " hypotheses (" + std::to_string(rejections) +
                " rejections): " + std::to_string(mismatches) + " mismatches");
  }
  {
    GridSpec g;
    g.ehf = {0.0, 10.0};
    g.chf = {0.0, 10.0};
    g.n = {250};
    g.n_studies = 6;
    g.n_runs = 20;
    g.n_boot = 100;
    g.methods = parse_methods(kTableMethods);
    g.seed = 11;
    auto text = [&](int w) {
      const SimulationReport r = run_scenario_grid(g, w);
      std::ostringstream out;
      write_report_csv(out, r.fwer, g);
      write_report_csv(out, r.power, g);
      for (const auto* cells : {&r.fwer, &r.power})
        for (const CellResult& cell : *cells)
          for (double x : cell.per_study) out << std::hexfloat << x << '\n';
      return out.str();
    };
    const std::string one = text(1), four = text(4);
    c.check(one == four, "reports with 1 and 4 workers are " + std::string(one == four ? "identical" : "different") +
                             " (" + std::to_string(one.size()) + " bytes)");
  }
  return c;
}

Criterion calibration(const SimulationReport& rep) {
  Criterion c;
  for (const auto& name : kTableMethods) {
    const CellResult& x = find_cell(rep.fwer, 500, 0, 0, name);
    c.check(x.estimate - 3 * x.mc_se <= 0.031, cell_text(x) + ", target <= 0.031 with 3 SE");
  }
  c.info(cell_text(find_cell(rep.fwer, 500, 0, 0, "unadj")) + ", per-hypothesis level only");
  return c;
}

void report(int number, const std::string& title, const std::function<Criterion()>& run, int& failures) {
  const auto t0 = Clock::now();
  Criterion c;
  try {
    c = run();
  } catch (const std::exception& e) {
    c.check(false, std::string("exception: ") + e.what());
  }
  failures += !c.ok;
  std::printf("%s criterion %d: %s (%.1f s)\n", c.ok ? "PASS" : "FAIL", number, title.c_str(), seconds_since(t0));
  for (const auto& line : c.lines) std::printf("    %s\n", line.c_str());
  std::fflush(stdout);
}

}  // namespace

int main() {
  int failures = 0;
  report(1, "example 1 mean true FWER at N=500", example1_fwer, failures);
  report(2, "variances of nu1 and nu2", nu_variances, failures);
  report(6, "numerics oracle suite", numerics_oracles, failures);
  report(7, "property suites", properties, failures);

  std::printf("running the N=500 grid (100 studies x 500 runs, %d workers)...\n", workers());
  std::fflush(stdout);
  auto t0 = Clock::now();
  const SimulationReport main_grid = run_scenario_grid(desk_grid({500}, {0.0, 1.0, 10.0}, true), workers());
  std::printf("    done in %.1f s\n", seconds_since(t0));
  report(3, "simulated FWER at N=500", [&] { return table1(main_grid); }, failures);
  report(4, "simulated power at N=500", [&] { return table2(main_grid); }, failures);
  report(8, "calibration under the homogeneous global null", [&] { return calibration(main_grid); }, failures);

  std::printf("running the N=250 and N=1000 grids...\n");
  std::fflush(stdout);
  t0 = Clock::now();
  const SimulationReport side_grid = run_scenario_grid(desk_grid({250, 1000}, {0.0}, false), workers());
  std::printf("    done in %.1f s\n", seconds_since(t0));
  report(5, "orderings in EHF and N", [&] { return orderings(side_grid); }, failures);

  std::printf("%d criteria failed\n", failures);
  return failures;
}
