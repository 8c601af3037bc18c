#ifndef FWER_TESTS_FIXTURES_HPP
#define FWER_TESTS_FIXTURES_HPP

#include <vector>

#include "fwer/trial.hpp"

namespace fixture {

// {1,2,3} and {2,3} with one experimental treatment.
inline fwer::TrialDesign nested() { return fwer::TrialDesign(3, {{0, 1, 2}, {1, 2}}, {"E", "E"}); }

// Single population with a single subgroup.
inline fwer::TrialDesign single() { return fwer::TrialDesign(1, {{0}}, {"E"}); }

// Layout with (control, experimental) sizes per subgroup for a design with one
// experimental treatment.
inline fwer::SampleLayout two_arm(const std::vector<double>& control, const std::vector<double>& experimental) {
  std::vector<double> sizes;
  for (std::size_t i = 0; i < control.size(); ++i) {
    sizes.push_back(control[i]);
    sizes.push_back(experimental[i]);
  }
  return fwer::SampleLayout(static_cast<int>(control.size()), 2, sizes);
}

inline fwer::TrialSummary summary(fwer::SampleLayout layout, std::vector<double> means, std::vector<double> ss) {
  fwer::TrialSummary s;
  s.layout = std::move(layout);
  s.means = std::move(means);
  s.ss = std::move(ss);
  return s;
}

}  // namespace fixture

#endif  // FWER_TESTS_FIXTURES_HPP
