#include "fwer/mvn.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "fwer/errors.hpp"
#include "fwer/normal.hpp"

namespace fwer {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSingularVar = 1e-10;
constexpr double kTinyCoef = 1e-12;
// Below this df the chi scale is drawn by exact inversion; above it a
// Wilson-Hilferty change of variables with a density-ratio weight is used.
constexpr double kExactChiDf = 10.0;

}  // namespace

CorrelationMatrix::CorrelationMatrix(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols() || m.rows() == 0)
    throw std::invalid_argument("correlation matrix must be square and nonempty");
  const Eigen::Index d = m.rows();
  for (Eigen::Index i = 0; i < d; ++i) {
    if (std::abs(m(i, i) - 1.0) > 1e-8)
      throw std::invalid_argument("correlation matrix must have a unit diagonal");
    for (Eigen::Index j = 0; j < d; ++j) {
      if (!std::isfinite(m(i, j))) throw std::invalid_argument("correlation matrix has non-finite entries");
      if (std::abs(m(i, j) - m(j, i)) > 1e-12)
        throw std::invalid_argument("correlation matrix must be symmetric");
    }
  }
  m_ = 0.5 * (m + m.transpose());
  m_.diagonal().setOnes();
  if (d == 1) {
    min_eig_ = 1.0;
    return;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m_);
  min_eig_ = es.eigenvalues().minCoeff();
  if (min_eig_ < -1e-8) throw NumericError("correlation matrix is not positive semidefinite");
  if (min_eig_ < 0.0) {
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
    Eigen::MatrixXd r = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    Eigen::VectorXd s = r.diagonal().cwiseSqrt().cwiseInverse();
    m_ = s.asDiagonal() * r * s.asDiagonal();
    m_ = 0.5 * (m_ + m_.transpose());
    m_.diagonal().setOnes();
  }
  m_ = m_.cwiseMax(-1.0).cwiseMin(1.0);
}

CorrelationMatrix CorrelationMatrix::identity(int d) {
  return CorrelationMatrix(Eigen::MatrixXd::Identity(d, d));
}

CorrelationMatrix CorrelationMatrix::equicorrelated(int d, double rho) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Constant(d, d, rho);
  m.diagonal().setOnes();
  return CorrelationMatrix(m);
}

namespace {

// A linear constraint lo[var] <= sum_j coef[j] * y_j <= hi[var] whose last
// coefficient belongs to the pivot that owns it.
struct Row {
  int var;
  std::vector<double> coef;
};

// Genz-Bretz ordering and Cholesky factor. Each pivot owns its own row and
// any singular rows folded onto it.
struct Plan {
  int k = 0;
  std::vector<std::vector<Row>> rows;
};

double interval_prob(double a, double b) {
  if (a > 0.0) return norm_sf(a) - norm_sf(b);
  return norm_cdf(b) - norm_cdf(a);
}

double truncated_mean(double a, double b) {
  const double p = interval_prob(a, b);
  if (p < 1e-300) {
    if (std::isinf(a)) return b;
    if (std::isinf(b)) return a;
    return 0.5 * (a + b);
  }
  const double fa = std::isinf(a) ? 0.0 : norm_pdf(a);
  const double fb = std::isinf(b) ? 0.0 : norm_pdf(b);
  return (fa - fb) / p;
}

double dot_prefix(const std::vector<double>& c, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) s += c[j] * y[j];
  return s;
}

Plan make_plan(const Eigen::MatrixXd& c, const std::vector<double>& lo, const std::vector<double>& hi) {
  const int d = static_cast<int>(c.rows());
  std::vector<std::vector<double>> coef(d);
  std::vector<char> done(d, 0);
  std::vector<double> ybar;
  Plan plan;
  int left = d;
  while (left > 0) {
    for (int j = 0; j < d; ++j) {
      if (done[j]) continue;
      double v = c(j, j);
      for (double x : coef[j]) v -= x * x;
      if (v >= kSingularVar) continue;
      int last = -1;
      for (int p = static_cast<int>(coef[j].size()) - 1; p >= 0; --p) {
        if (std::abs(coef[j][p]) > kTinyCoef) {
          last = p;
          break;
        }
      }
      if (last < 0) throw NumericError("degenerate variable in correlation matrix");
      Row r{j, std::vector<double>(coef[j].begin(), coef[j].begin() + last + 1)};
      plan.rows[last].push_back(std::move(r));
      done[j] = 1;
      --left;
    }
    if (left == 0) break;

    int best = -1;
    double best_p = kInf, best_sd = 0.0, best_a = 0.0, best_b = 0.0;
    for (int j = 0; j < d; ++j) {
      if (done[j]) continue;
      double v = c(j, j);
      for (double x : coef[j]) v -= x * x;
      const double sd = std::sqrt(v);
      const double shift = dot_prefix(coef[j], ybar.data(), coef[j].size());
      const double a = (lo[j] - shift) / sd;
      const double b = (hi[j] - shift) / sd;
      const double p = interval_prob(a, b);
      if (p < best_p) {
        best = j;
        best_p = p;
        best_sd = sd;
        best_a = a;
        best_b = b;
      }
    }
    for (int i = 0; i < d; ++i) {
      if (done[i] || i == best) continue;
      double s = c(i, best);
      for (std::size_t p = 0; p < coef[i].size(); ++p) s -= coef[i][p] * coef[best][p];
      coef[i].push_back(s / best_sd);
    }
    Row own{best, coef[best]};
    own.coef.push_back(best_sd);
    plan.rows.push_back({std::move(own)});
    ++plan.k;
    ybar.push_back(truncated_mean(best_a, best_b));
    done[best] = 1;
    --left;
  }
  return plan;
}

// Bounds of pivot m given the earlier pivot values y and the limit scale.
void pivot_bounds(const Plan& plan, int m, const double* y, double scale, const std::vector<double>& lo,
                  const std::vector<double>& hi, double& a, double& b) {
  a = -kInf;
  b = kInf;
  for (const Row& r : plan.rows[m]) {
    const double s = dot_prefix(r.coef, y, static_cast<std::size_t>(m));
    const double cm = r.coef[m];
    double t1 = (lo[r.var] * scale - s) / cm;
    double t2 = (hi[r.var] * scale - s) / cm;
    if (cm < 0.0) std::swap(t1, t2);
    a = std::max(a, t1);
    b = std::min(b, t2);
  }
}

double clamp_prob(double p) { return std::clamp(p, 1e-300, 1.0 - 1e-16); }

// Separation-of-variables integrand. w holds k-1 uniforms.
double genz_integrand(const Plan& plan, const double* w, double scale, const std::vector<double>& lo,
                      const std::vector<double>& hi, double* y) {
  double prod = 1.0;
  for (int m = 0; m < plan.k; ++m) {
    double a, b;
    pivot_bounds(plan, m, y, scale, lo, hi, a, b);
    if (!(b > a)) return 0.0;
    double e, base;
    const bool upper_tail = a > 0.0;
    if (upper_tail) {
      base = norm_sf(a);
      e = base - norm_sf(b);
    } else {
      base = norm_cdf(a);
      e = norm_cdf(b) - base;
    }
    if (!(e > 0.0)) return 0.0;
    prod *= e;
    if (m + 1 < plan.k) {
      y[m] = upper_tail ? -norm_quantile(clamp_prob(base - w[m] * e))
                        : norm_quantile(clamp_prob(base + w[m] * e));
    }
  }
  return prod;
}

struct ChiDraw {
  double scale;
  double weight;
};

class ChiScale {
 public:
  explicit ChiScale(double df) : df_(df) {
    a_ = 2.0 / (9.0 * df);
    sqrt_a_ = std::sqrt(a_);
    log_norm_ = -0.5 * df * std::log(2.0) - std::lgamma(0.5 * df);
  }

  ChiDraw operator()(double u) const {
    u = std::clamp(u, 1e-300, 1.0 - 1e-16);
    if (df_ < kExactChiDf) {
      const double x = 2.0 * boost::math::gamma_p_inv(0.5 * df_, u);
      return {std::sqrt(x / df_), 1.0};
    }
    const double z = norm_quantile(u);
    const double base = 1.0 - a_ + z * sqrt_a_;
    if (!(base > 0.0)) return {1.0, 0.0};
    const double q = df_ * base * base * base;
    const double log_f = log_norm_ + (0.5 * df_ - 1.0) * std::log(q) - 0.5 * q;
    const double log_dq = std::log(3.0 * df_ * base * base * sqrt_a_);
    const double log_phi = -0.5 * z * z - 0.9189385332046728;
    return {std::pow(base, 1.5), std::exp(log_f + log_dq - log_phi)};
  }

 private:
  double df_, a_, sqrt_a_, log_norm_;
};

std::vector<double> lattice_generator(int dims) {
  std::vector<double> z;
  for (int n = 2; static_cast<int>(z.size()) < dims; ++n) {
    bool prime = true;
    for (int p = 2; p * p <= n; ++p) {
      if (n % p == 0) {
        prime = false;
        break;
      }
    }
    if (prime) {
      const double r = std::sqrt(static_cast<double>(n));
      z.push_back(r - std::floor(r));
    }
  }
  return z;
}

// Randomly shifted Kronecker lattice with tent periodisation; each point is
// paired with its antithetic reflection.
class PointSet {
 public:
  PointSet(int dims, int n_shifts, RngStream& rng) : dims_(dims), n_shifts_(n_shifts), z_(lattice_generator(dims)) {
    shifts_.resize(static_cast<std::size_t>(dims) * n_shifts);
    for (double& s : shifts_) s = rng.uniform();
  }
  int dims() const noexcept { return dims_; }
  int n_shifts() const noexcept { return n_shifts_; }

  void point(long i, int s, bool anti, double* x) const {
    const double* sh = shifts_.data() + static_cast<std::size_t>(s) * dims_;
    for (int j = 0; j < dims_; ++j) {
      double v = static_cast<double>(i) * z_[j] + sh[j];
      v -= std::floor(v);
      v = std::abs(2.0 * v - 1.0);
      x[j] = anti ? 1.0 - v : v;
    }
  }

 private:
  int dims_;
  int n_shifts_;
  std::vector<double> z_;
  std::vector<double> shifts_;
};

// f(x) is evaluated at lattice points; n doubles until 3 SE <= tol.
template <class F>
MvProbResult integrate_adaptive(const PointSet& ps, F&& f, double tol, const QmcOptions& opts) {
  const int ns = ps.n_shifts();
  std::vector<double> sums(ns, 0.0);
  std::vector<double> x(ps.dims());
  long done = 0;
  long target = std::max(1L, opts.min_points);
  MvProbResult out;
  while (true) {
    for (int s = 0; s < ns; ++s) {
      for (long i = done + 1; i <= target; ++i) {
        ps.point(i, s, false, x.data());
        double v = f(x.data());
        ps.point(i, s, true, x.data());
        v += f(x.data());
        sums[s] += 0.5 * v;
      }
    }
    done = target;
    double mean = 0.0;
    for (double v : sums) mean += v / static_cast<double>(done);
    mean /= ns;
    double ss = 0.0;
    for (double v : sums) {
      const double dv = v / static_cast<double>(done) - mean;
      ss += dv * dv;
    }
    const double se = ns > 1 ? std::sqrt(ss / (ns - 1) / ns) : 0.0;
    out.value = mean;
    out.error_estimate = 3.0 * se;
    out.points_used = 2 * done * ns;
    if (out.error_estimate <= tol || 2 * target > opts.max_points) break;
    target *= 2;
  }
  out.value = std::clamp(out.value, 0.0, 1.0);
  return out;
}

double t_cdf(double x, double df) {
  if (std::isinf(x)) return x > 0 ? 1.0 : 0.0;
  return boost::math::cdf(boost::math::students_t(df), x);
}

double t_quantile(double p, double df) { return boost::math::quantile(boost::math::students_t(df), p); }

struct Reduced {
  Eigen::MatrixXd c;
  std::vector<double> lo, hi;
  bool zero = false;
};

Reduced reduce(std::span<const double> upper, const CorrelationMatrix& corr) {
  if (static_cast<int>(upper.size()) != corr.dim())
    throw std::invalid_argument("limit vector and correlation matrix differ in dimension");
  Reduced r;
  std::vector<int> keep;
  for (std::size_t i = 0; i < upper.size(); ++i) {
    if (std::isnan(upper[i])) throw std::invalid_argument("NaN integration limit");
    if (upper[i] == -kInf) {
      r.zero = true;
      return r;
    }
    if (upper[i] != kInf) keep.push_back(static_cast<int>(i));
  }
  const int d = static_cast<int>(keep.size());
  r.c.resize(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) r.c(i, j) = corr(keep[i], keep[j]);
  r.lo.assign(d, -kInf);
  for (int i : keep) r.hi.push_back(upper[i]);
  return r;
}

MvProbResult rect_prob(std::span<const double> upper, const CorrelationMatrix& corr, std::optional<double> df,
                       double tol, RngStream& rng, const QmcOptions& opts) {
  if (!(tol > 0.0)) throw std::invalid_argument("tol must be positive");
  if (df && !(*df > 0.0)) throw std::invalid_argument("df must be positive");
  Reduced r = reduce(upper, corr);
  if (r.zero) return {0.0, 0.0, 0};
  const int d = static_cast<int>(r.hi.size());
  if (d == 0) return {1.0, 0.0, 0};
  if (d == 1) return {df ? t_cdf(r.hi[0], *df) : norm_cdf(r.hi[0]), 0.0, 1};

  const Plan plan = make_plan(r.c, r.lo, r.hi);
  if (plan.k == 1) {
    double a, b;
    pivot_bounds(plan, 0, nullptr, 1.0, r.lo, r.hi, a, b);
    if (!(b > a)) return {0.0, 0.0, 1};
    const double v = df ? t_cdf(b, *df) - t_cdf(a, *df) : interval_prob(a, b);
    return {std::clamp(v, 0.0, 1.0), 0.0, 1};
  }

  std::vector<double> y(plan.k);
  if (!df) {
    PointSet ps(plan.k - 1, opts.n_shifts, rng);
    return integrate_adaptive(
        ps, [&](const double* w) { return genz_integrand(plan, w, 1.0, r.lo, r.hi, y.data()); }, tol, opts);
  }
  const ChiScale chi(*df);
  PointSet ps(plan.k, opts.n_shifts, rng);
  return integrate_adaptive(
      ps,
      [&](const double* w) {
        const ChiDraw cd = chi(w[plan.k - 1]);
        if (cd.weight == 0.0) return 0.0;
        return cd.weight * genz_integrand(plan, w, cd.scale, r.lo, r.hi, y.data());
      },
      tol, opts);
}

}  // namespace

struct EquicoordinateCdf::Impl {
  Impl(const CorrelationMatrix& corr, std::optional<double> df, double c0, double tol, RngStream& rng,
       const QmcOptions& opts)
      : df_(df), d_(corr.dim()) {
    const int d = corr.dim();
    lo_.assign(d, -kInf);
    hi_.assign(d, c0);
    plan_ = make_plan(corr.matrix(), lo_, hi_);
    y_.resize(plan_.k);
    if (plan_.k == 1) return;

    const int dims = df ? plan_.k : plan_.k - 1;
    PointSet ps(dims, opts.n_shifts, rng);
    std::optional<ChiScale> chi;
    if (df) chi.emplace(*df);
    auto f = [&](const double* w) {
      if (!df) return genz_integrand(plan_, w, 1.0, lo_, hi_, y_.data());
      const ChiDraw cd = (*chi)(w[plan_.k - 1]);
      if (cd.weight == 0.0) return 0.0;
      return cd.weight * genz_integrand(plan_, w, cd.scale, lo_, hi_, y_.data());
    };
    const MvProbResult probe = integrate_adaptive(ps, f, tol, opts);
    const long n = probe.points_used / (2L * opts.n_shifts);

    const std::size_t count = static_cast<std::size_t>(2 * n * opts.n_shifts);
    points_.resize(count * static_cast<std::size_t>(std::max(plan_.k - 1, 1)));
    if (df) draws_.resize(count);
    std::vector<double> x(dims);
    std::size_t idx = 0;
    for (int s = 0; s < opts.n_shifts; ++s) {
      for (long i = 1; i <= n; ++i) {
        for (int anti = 0; anti < 2; ++anti, ++idx) {
          ps.point(i, s, anti != 0, x.data());
          for (int j = 0; j + 1 < plan_.k; ++j) points_[idx * (plan_.k - 1) + j] = x[j];
          if (df) draws_[idx] = (*chi)(x[plan_.k - 1]);
        }
      }
    }
    count_ = count;
  }

  double cdf(double c) {
    std::fill(hi_.begin(), hi_.end(), c);
    if (plan_.k == 1) {
      double a, b;
      pivot_bounds(plan_, 0, nullptr, 1.0, lo_, hi_, a, b);
      if (!(b > a)) return 0.0;
      return df_ ? t_cdf(b, *df_) - t_cdf(a, *df_) : interval_prob(a, b);
    }
    double sum = 0.0;
    const int stride = plan_.k - 1;
    for (std::size_t idx = 0; idx < count_; ++idx) {
      const double* w = points_.data() + idx * stride;
      if (df_) {
        const ChiDraw& cd = draws_[idx];
        if (cd.weight != 0.0) sum += cd.weight * genz_integrand(plan_, w, cd.scale, lo_, hi_, y_.data());
      } else {
        sum += genz_integrand(plan_, w, 1.0, lo_, hi_, y_.data());
      }
    }
    return sum / static_cast<double>(count_);
  }

  std::optional<double> df_;
  int d_;
  std::vector<double> lo_, hi_, y_;
  Plan plan_;
  std::vector<double> points_;
  std::vector<ChiDraw> draws_;
  std::size_t count_ = 0;
};

EquicoordinateCdf::EquicoordinateCdf(const CorrelationMatrix& corr, std::optional<double> df, double anchor,
                                     double tol, RngStream& rng, const QmcOptions& opts) {
  if (df && !(*df > 0.0)) throw std::invalid_argument("df must be positive");
  if (!(tol > 0.0)) throw std::invalid_argument("tol must be positive");
  impl_ = std::make_unique<Impl>(corr, df, anchor, tol, rng, opts);
}

EquicoordinateCdf::~EquicoordinateCdf() = default;
EquicoordinateCdf::EquicoordinateCdf(EquicoordinateCdf&&) noexcept = default;
EquicoordinateCdf& EquicoordinateCdf::operator=(EquicoordinateCdf&&) noexcept = default;

double EquicoordinateCdf::cdf(double c) {
  if (impl_->d_ == 1) return impl_->df_ ? t_cdf(c, *impl_->df_) : norm_cdf(c);
  return std::clamp(impl_->cdf(c), 0.0, 1.0);
}

double EquicoordinateCdf::bracket_mid(int d, double alpha, std::optional<double> df) {
  auto uq = [&](double p) { return df ? t_quantile(p, *df) : norm_quantile(p); };
  return 0.5 * (uq(1.0 - alpha) + uq(1.0 - alpha / d));
}

double EquicoordinateCdf::quantile(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  const auto df = impl_->df_;
  const int d = impl_->d_;
  auto uq = [&](double p) { return df ? t_quantile(p, *df) : norm_quantile(p); };
  double lo = uq(1.0 - alpha);
  if (d == 1) return lo;
  double hi = uq(1.0 - alpha / d);
  auto g = [&](double c) { return exceedance(c) - alpha; };

  double glo = g(lo), ghi = g(hi);
  double step = std::max(hi - lo, 0.05);
  int expansions = 0;
  while (glo < 0.0) {
    if (++expansions > 50) throw NumericError("equicoordinate quantile: bracketing failed");
    hi = lo;
    ghi = glo;
    lo -= step;
    step *= 2.0;
    glo = g(lo);
  }
  while (ghi > 0.0) {
    if (++expansions > 50) throw NumericError("equicoordinate quantile: bracketing failed");
    lo = hi;
    glo = ghi;
    hi += step;
    step *= 2.0;
    ghi = g(hi);
  }
  if (glo == 0.0) return lo;
  if (ghi == 0.0) return hi;
  std::uintmax_t max_iter = 200;
  const auto root = boost::math::tools::toms748_solve(g, lo, hi, glo, ghi,
                                                      boost::math::tools::eps_tolerance<double>(40), max_iter);
  return 0.5 * (root.first + root.second);
}

MvProbResult mv_normal_prob(std::span<const double> upper, const CorrelationMatrix& corr, double tol,
                            RngStream& rng, const QmcOptions& opts) {
  return rect_prob(upper, corr, std::nullopt, tol, rng, opts);
}

MvProbResult mv_t_prob(std::span<const double> upper, const CorrelationMatrix& corr, double df, double tol,
                       RngStream& rng, const QmcOptions& opts) {
  if (!(df > 0.0)) throw std::invalid_argument("df must be positive");
  return rect_prob(upper, corr, df, tol, rng, opts);
}

double equicoordinate_quantile(const CorrelationMatrix& corr, double alpha, std::optional<double> df, double tol,
                               RngStream& rng, const QmcOptions& opts) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  EquicoordinateCdf f(corr, df, EquicoordinateCdf::bracket_mid(corr.dim(), alpha, df), tol, rng, opts);
  return f.quantile(alpha);
}

double true_fwer_given_shift(std::span<const double> shift, const CorrelationMatrix& corr, double c, double tol,
                             RngStream& rng, const QmcOptions& opts) {
  if (static_cast<int>(shift.size()) != corr.dim())
    throw std::invalid_argument("shift vector and correlation matrix differ in dimension");
  std::vector<double> upper(shift.size());
  for (std::size_t i = 0; i < shift.size(); ++i) upper[i] = c - shift[i];
  return std::clamp(1.0 - mv_normal_prob(upper, corr, tol, rng, opts).value, 0.0, 1.0);
}

double max_exceedance_prob(double z, const CorrelationMatrix& corr, std::optional<double> df, double tol,
                           RngStream& rng, const QmcOptions& opts) {
  std::vector<double> upper(corr.dim(), z);
  return std::clamp(1.0 - rect_prob(upper, corr, df, tol, rng, opts).value, 0.0, 1.0);
}

}  // namespace fwer
