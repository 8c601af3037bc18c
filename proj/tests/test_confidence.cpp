#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "fwer/bootstrap.hpp"
#include "fwer/confidence.hpp"
#include "fwer/errors.hpp"
#include "fwer/procedures.hpp"
#include "fwer/simulation.hpp"

using namespace fwer;

namespace {

constexpr double kTol = 5e-4;

TestResult run_method(const TrialSummary& s, const TrialDesign& d, const MethodSpec& m, RngStream& rng,
                      int n_boot = 200) {
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

}  // namespace

TEST(LowerBounds, ZeroEstimateIsNegative) {
  const TrialDesign d = fixture::nested();
  const auto s = fixture::summary(fixture::two_arm({10, 12, 14}, {10, 12, 14}), {1, 1, 2, 2, 3, 3},
                                  {2, 3, 4, 2, 3, 4});
  RngStream rng(1);
  const TestResult r = run_method(s, d, MethodSpec::parse("anova+t"), rng);
  const ConfidenceSet cs = simultaneous_lower_bounds(r);
  for (std::size_t i = 0; i < cs.lower.size(); ++i) {
    EXPECT_DOUBLE_EQ(cs.estimate[i], 0.0);
    EXPECT_LT(cs.lower[i], 0.0);
    EXPECT_FALSE(r.hypotheses[i].reject);
  }
}

TEST(LowerBounds, SingleStratumStratifiedIsClassic) {
  const TrialDesign d = fixture::single();
  auto s = fixture::summary(fixture::two_arm({20}, {30}), {0.0, 0.4}, {0, 0});
  s.known_variance = 0.25;
  RngStream rng(2);
  const TestResult r = run_method(s, d, MethodSpec::parse("strat+boot@known"), rng, 500);
  const ConfidenceSet cs = simultaneous_lower_bounds(r);
  const double se = 0.5 * std::sqrt(1.0 / 20 + 1.0 / 30);
  EXPECT_NEAR(cs.se[0], se, 1e-14);
  EXPECT_NEAR(cs.estimate[0], 0.4, 1e-14);
  EXPECT_NEAR(cs.lower[0], 0.4 - cs.critical_value[0] * se, 1e-14);
  // A single standardised normal: the bootstrap c sits near the 97.5% point.
  EXPECT_NEAR(cs.critical_value[0], 1.959964, 0.25);
}

TEST(LowerBounds, IndependentAnovaPairWidens) {
  // Disjoint subgroups with their own controls give independent statistics.
  const TrialDesign d(2, {{0}, {1}}, {"A", "B"});
  std::vector<double> sizes(6, 0.0);
  sizes[d.cell(0, 0)] = 40;
  sizes[d.cell(0, 1)] = 40;
  sizes[d.cell(1, 0)] = 50;
  sizes[d.cell(1, 2)] = 50;
  TrialSummary s;
  s.layout = SampleLayout(2, 3, sizes);
  s.means.assign(6, 0.0);
  s.means[d.cell(0, 1)] = 0.3;
  s.means[d.cell(1, 2)] = 0.1;
  s.ss.assign(6, 0.0);
  s.known_variance = 0.25;
  RngStream rng(3);
  const TestResult adj = run_method(s, d, MethodSpec::parse("anova+t@known"), rng);
  const TestResult un = run_method(s, d, MethodSpec::parse("unadj@known"), rng);
  const double c_ind = 2.2389643757;
  const double z = 1.959963985;
  const ConfidenceSet cs = simultaneous_lower_bounds(adj);
  for (int i = 0; i < 2; ++i) {
    EXPECT_NEAR(cs.critical_value[i], c_ind, 0.005);
    const double un_lower = un.hypotheses[i].estimate - z * un.hypotheses[i].se;
    EXPECT_NEAR(un_lower - cs.lower[i], (cs.critical_value[i] - z) * cs.se[i], 1e-9);
  }
  EXPECT_THROW(simultaneous_lower_bounds(un), UnsupportedMethodError);
}

TEST(LowerBounds, MissingPiecesAreRejected) {
  TestResult r;
  r.method = "anova+t";
  r.hypotheses.resize(1);
  r.hypotheses[0].se = 1.0;
  EXPECT_THROW(simultaneous_lower_bounds(r), UnsupportedMethodError);
  r.hypotheses[0].critical_value = 2.0;
  r.hypotheses[0].se = 0.0;
  EXPECT_THROW(simultaneous_lower_bounds(r), UnsupportedMethodError);
  r.hypotheses[0].se = 0.5;
  r.hypotheses[0].estimate = 3.0;
  attach_lower_bounds(r);
  EXPECT_DOUBLE_EQ(*r.hypotheses[0].ci_lower, 2.0);
}

TEST(LowerBounds, DualityWithTests) {
  const TrialDesign d = fixture::nested();
  RngStream rng(4);
  for (const char* name : {"anova+t", "marg+t", "anova+boot", "marg+boot", "marg+shr+boot", "strat+boot"}) {
    const MethodSpec m = MethodSpec::parse(name);
    const int reps = 1000;
    int rejections = 0;
    for (int k = 0; k < reps; ++k) {
      const TrialSummary s = random_trial(rng, d, 0.6);
      const TestResult r = run_method(s, d, m, rng, 100);
      const ConfidenceSet cs = simultaneous_lower_bounds(r);
      for (std::size_t i = 0; i < cs.lower.size(); ++i) {
        ASSERT_EQ(r.hypotheses[i].reject, cs.lower[i] > 0.0) << name << " rep " << k;
        rejections += r.hypotheses[i].reject;
      }
    }
    // Both outcomes occur, so the check is not vacuous.
    EXPECT_GT(rejections, 0) << name;
    EXPECT_LT(rejections, 2 * reps) << name;
  }
}

TEST(LowerBounds, SimultaneousCoverageUnderHomogeneousNull) {
  const TrialDesign d = fixture::nested();
  const MethodSpec m = MethodSpec::parse("anova+t");
  StudyConfig c;
  c.prevalences = {0.3, 0.3, 0.4};
  c.effects = {0.2, 0.2, 0.2};
  const PopulationModel model = c.model(d, 0.25);
  const std::vector<double> prev{0.3, 0.3, 0.4};
  RngStream rng(5);
  const int trials = 10000;
  int misses = 0;
  for (int k = 0; k < trials; ++k) {
    const SampleLayout lay = draw_layout(d, prev, 200, Allocation::A, AllocationSplit::proportional, rng);
    const TrialSummary s = draw_summary(d, lay, model, rng);
    const ConfidenceSet cs = simultaneous_lower_bounds(run_method(s, d, m, rng));
    bool miss = false;
    for (double lo : cs.lower) miss = miss || lo > 0.2;
    misses += miss;
  }
  const double rate = static_cast<double>(misses) / trials;
  EXPECT_LE(rate, 0.025 + 3.0 * std::sqrt(0.025 * 0.975 / trials));
  EXPECT_GT(rate, 0.01);
}
