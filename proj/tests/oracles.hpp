#ifndef FWER_TESTS_ORACLES_HPP
#define FWER_TESTS_ORACLES_HPP

// Reference values computed by one-dimensional adaptive quadrature, used to
// check the QMC integrator.

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <limits>
#include <vector>

namespace oracle {

inline double phi_cdf(double x) {
  return boost::math::cdf(boost::math::normal_distribution<double>(), x);
}

// P(X_i <= u_i for all i), X equicorrelated normal with rho in [0, 1), using
// X_i = sqrt(rho) Z + sqrt(1 - rho) E_i.
inline double equicorrelated_normal_cdf(const std::vector<double>& u, double rho) {
  const double a = std::sqrt(rho), b = std::sqrt(1.0 - rho);
  auto f = [&](double z) {
    double p = std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
    for (double ui : u) p *= phi_cdf((ui - a * z) / b);
    return p;
  };
  const double inf = std::numeric_limits<double>::infinity();
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, -inf, inf, 15, 1e-13);
}

// Same for the multivariate t: mixes the normal result over the chi scale.
inline double equicorrelated_t_cdf(const std::vector<double>& u, double rho, double df) {
  boost::math::chi_squared_distribution<double> chi(df);
  auto f = [&](double x) {
    const double s = std::sqrt(x / df);
    std::vector<double> us(u);
    for (double& v : us) v *= s;
    return boost::math::pdf(chi, x) * equicorrelated_normal_cdf(us, rho);
  };
  const double inf = std::numeric_limits<double>::infinity();
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, 0.0, inf, 10, 1e-11);
}

}  // namespace oracle

#endif  // FWER_TESTS_ORACLES_HPP
