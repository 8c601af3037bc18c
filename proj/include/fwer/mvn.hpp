#ifndef FWER_MVN_HPP
#define FWER_MVN_HPP

#include <Eigen/Dense>

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "fwer/rng.hpp"

namespace fwer {

// Symmetric unit-diagonal PSD matrix. Slightly indefinite input (smallest
// eigenvalue down to -1e-8) is repaired by clipping the spectrum at zero and
// rescaling back to a unit diagonal.
class CorrelationMatrix {
 public:
  CorrelationMatrix() = default;
  explicit CorrelationMatrix(const Eigen::MatrixXd& m);

  static CorrelationMatrix identity(int d);
  static CorrelationMatrix equicorrelated(int d, double rho);

  int dim() const noexcept { return static_cast<int>(m_.rows()); }
  double operator()(int i, int j) const { return m_(i, j); }
  const Eigen::MatrixXd& matrix() const noexcept { return m_; }
  // Smallest eigenvalue of the input before repair.
  double min_eigenvalue() const noexcept { return min_eig_; }

 private:
  Eigen::MatrixXd m_;
  double min_eig_ = 1.0;
};

struct MvProbResult {
  double value = 0.0;
  double error_estimate = 0.0;
  long points_used = 0;
};

struct QmcOptions {
  int n_shifts = 8;
  long min_points = 16;
  long max_points = 1L << 17;
};

// P(X <= upper) for X ~ N(0, corr). Entries of upper may be +-infinity.
MvProbResult mv_normal_prob(std::span<const double> upper, const CorrelationMatrix& corr,
                            double tol, RngStream& rng, const QmcOptions& opts = {});

// Same for the central multivariate t with df degrees of freedom.
MvProbResult mv_t_prob(std::span<const double> upper, const CorrelationMatrix& corr, double df,
                       double tol, RngStream& rng, const QmcOptions& opts = {});

// F(c) = P(max_i X_i <= c) on one frozen randomized point set, so repeated
// evaluations are noise-free and monotone enough for root finding. The
// variable ordering and the point count are fixed at the anchor value.
class EquicoordinateCdf {
 public:
  EquicoordinateCdf(const CorrelationMatrix& corr, std::optional<double> df, double anchor, double tol,
                    RngStream& rng, const QmcOptions& opts = {});
  ~EquicoordinateCdf();
  EquicoordinateCdf(EquicoordinateCdf&&) noexcept;
  EquicoordinateCdf& operator=(EquicoordinateCdf&&) noexcept;

  double cdf(double c);
  double exceedance(double c) { return 1.0 - cdf(c); }
  // Root of exceedance(c) = alpha, bracketed from the univariate and
  // Bonferroni quantiles.
  double quantile(double alpha);

  // Midpoint of the univariate and Bonferroni quantiles; a good anchor.
  static double bracket_mid(int d, double alpha, std::optional<double> df);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// c with P(max_i X_i > c) = alpha, X normal (no df) or t (df given).
double equicoordinate_quantile(const CorrelationMatrix& corr, double alpha,
                               std::optional<double> df, double tol, RngStream& rng,
                               const QmcOptions& opts = {});

// P(max_i X_i > c) for X ~ N(shift, corr).
double true_fwer_given_shift(std::span<const double> shift, const CorrelationMatrix& corr,
                             double c, double tol, RngStream& rng, const QmcOptions& opts = {});

// P(max_i X_i > z) under the centred normal or t law; the adjusted p-value of
// a max-statistic test.
double max_exceedance_prob(double z, const CorrelationMatrix& corr, std::optional<double> df,
                           double tol, RngStream& rng, const QmcOptions& opts = {});

}  // namespace fwer

#endif  // FWER_MVN_HPP
