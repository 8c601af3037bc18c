#include "fwer/confidence.hpp"

#include <cmath>

#include "fwer/errors.hpp"
#include "fwer/procedures.hpp"

namespace fwer {

ConfidenceSet simultaneous_lower_bounds(const TestResult& result) {
  if (MethodSpec::parse(result.method).calibration == Calibration::unadjusted)
    throw UnsupportedMethodError("unadjusted tests do not give simultaneous bounds");
  ConfidenceSet out;
  out.method = result.method;
  out.alpha = result.alpha;
  for (std::size_t i = 0; i < result.hypotheses.size(); ++i) {
    const HypothesisResult& h = result.hypotheses[i];
    if (!h.critical_value) throw UnsupportedMethodError("hypothesis " + std::to_string(i) + " has no critical value");
    if (!(h.se > 0.0) || !std::isfinite(h.se))
      throw UnsupportedMethodError("hypothesis " + std::to_string(i) + " has no usable standard error");
    out.estimate.push_back(h.estimate);
    out.se.push_back(h.se);
    out.critical_value.push_back(*h.critical_value);
    out.lower.push_back(h.estimate - *h.critical_value * h.se);
  }
  return out;
}

void attach_lower_bounds(TestResult& result) {
  const ConfidenceSet cs = simultaneous_lower_bounds(result);
  for (std::size_t i = 0; i < cs.lower.size(); ++i) result.hypotheses[i].ci_lower = cs.lower[i];
}

}  // namespace fwer
