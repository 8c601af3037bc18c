#ifndef FWER_CONFIDENCE_HPP
#define FWER_CONFIDENCE_HPP

#include <string>
#include <vector>

#include "fwer/trial.hpp"

namespace fwer {

// One-sided simultaneous bounds [estimate - c * se, inf).
struct ConfidenceSet {
  std::string method;
  double alpha = 0.025;
  std::vector<double> estimate;
  std::vector<double> se;
  std::vector<double> critical_value;
  std::vector<double> lower;
};

// Uses the critical values and standard errors stored in the test result, so
// the bound is positive exactly when the hypothesis is rejected. Throws
// UnsupportedMethodError for unadjusted results or hypotheses without a
// critical value or a positive finite SE.
ConfidenceSet simultaneous_lower_bounds(const TestResult& result);

// Stores the bounds in result.hypotheses[i].ci_lower.
void attach_lower_bounds(TestResult& result);

}  // namespace fwer

#endif  // FWER_CONFIDENCE_HPP
