#ifndef LBILL_NUMERICS_HPP
#define LBILL_NUMERICS_HPP

// Small numerical toolkit shared by the modules: adaptive quadrature,
// bracketed 1D minimization, Nelder-Mead, compensated sums, a deterministic
// parallel loop and a few descriptive statistics.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <string_view>
#include <vector>

namespace lbill {

template <typename T>
concept Real = std::floating_point<T>;

/// Neumaier-compensated running sum. Result does not depend on magnitude order
/// to within a few ulps, which keeps ensemble reductions reproducible.
template <Real Scalar>
class CompensatedSum {
 public:
  void add(Scalar x) noexcept {
    const Scalar t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  CompensatedSum& operator+=(Scalar x) noexcept {
    add(x);
    return *this;
  }
  Scalar value() const noexcept { return sum_ + comp_; }

 private:
  Scalar sum_{0};
  Scalar comp_{0};
};

struct QuadratureResult {
  double value = 0.0;
  double error = 0.0;
  int evaluations = 0;
};

/// Globally adaptive Gauss-Kronrod (7/15) quadrature on [a, b].
QuadratureResult integrate(const std::function<double(double)>& f, double a, double b,
                           double abs_tol = 1e-13, double rel_tol = 1e-12, int max_intervals = 4000);

struct MinimizeResult {
  double x = 0.0;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Brent's bracketed minimizer on [a, b].
MinimizeResult brent_minimize(const std::function<double(double)>& f, double a, double b,
                              double x_tol = 1e-10, int max_iter = 200);

struct SimplexResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Nelder-Mead downhill simplex with restart on convergence.
SimplexResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x0,
                          const Eigen::VectorXd& step, double f_tol = 1e-12, int max_iter = 5000);

/// Central-difference gradient norm, used to report optimizer quality.
double gradient_norm(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                     double h = 1e-6);

/// Runs body(i) for i in [0, n) on up to `threads` workers. Callers write one
/// output slot per index and reduce afterwards in index order, so results are
/// identical for any thread count.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body);

/// Resolves a thread request: 0 means hardware concurrency.
int resolve_threads(int requested);

double mean(std::span<const double> x);
double pearson(std::span<const double> x, std::span<const double> y);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};
LineFit linear_fit(std::span<const double> x, std::span<const double> y);

/// Regularized upper incomplete gamma Q(a, x) = Γ(a, x)/Γ(a).
double regularized_gamma_q(double a, double x);

/// Regularized incomplete beta I_x(a, b).
double regularized_beta(double a, double b, double x);

/// Kolmogorov distribution survival function P(K > t).
double kolmogorov_survival(double t);

/// Asymptotic p-value of a one-sample KS statistic d over n samples.
double ks_pvalue(double d, std::size_t n);

/// Kolmogorov-Smirnov statistic of sorted samples against a CDF.
double ks_statistic(std::span<const double> sorted, const std::function<double(double)>& cdf);

/// 64-bit FNV-1a, used for content addressing.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace lbill

#endif  // LBILL_NUMERICS_HPP
