#include "lbill/spectra.hpp"

#include "quantum_detail.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace lbill {

namespace {

void require_spacing(double s) {
  if (!(s >= 0.0)) throw ParameterOutOfRange("spacing must be >= 0");
}

void require_unit(double x, const char* name) {
  if (!(x >= 0.0 && x <= 1.0)) throw ParameterOutOfRange(std::string(name) + " must lie in [0, 1]");
}

// ln S with a floor, so exactly degenerate levels do not make the likelihood -inf.
double safe_log(double s) { return std::log(std::max(s, 1e-300)); }

FitReport make_report(std::span<const double> sorted, double log_likelihood,
                      const std::function<double(double)>& cdf) {
  FitReport r;
  r.log_likelihood = log_likelihood;
  r.sample_count = sorted.size();
  r.ks_statistic = ks_statistic(sorted, cdf);
  r.ks_pvalue = ks_pvalue(r.ks_statistic, sorted.size());
  return r;
}

std::vector<double> sorted_copy(std::span<const double> x) {
  std::vector<double> out(x.begin(), x.end());
  std::sort(out.begin(), out.end());
  return out;
}

double brb_log_likelihood(std::span<const double> spacings, double rho1, double beta) {
  CompensatedSum<double> sum;
  for (double s : spacings) sum += std::log(std::max(brb_P(s, rho1, beta), 1e-300));
  return sum.value();
}

}  // namespace

UnfoldedSpectrum unfold_levels(std::span<const double> levels, const BilliardShape& shape) {
  UnfoldedSpectrum out;
  out.lambda = shape.lambda();
  out.unfolded_levels.reserve(levels.size());
  for (double k : levels) out.unfolded_levels.push_back(weyl_count(shape, k));
  std::sort(out.unfolded_levels.begin(), out.unfolded_levels.end());
  for (std::size_t i = 1; i < out.unfolded_levels.size(); ++i) {
    out.spacings.push_back(out.unfolded_levels[i] - out.unfolded_levels[i - 1]);
  }
  if (!levels.empty()) {
    out.k_lo = *std::min_element(levels.begin(), levels.end());
    out.k_hi = *std::max_element(levels.begin(), levels.end());
  }
  return out;
}

UnfoldedSpectrum unfold(const SpectralWindow& window, const BilliardShape& shape, double count_tolerance) {
  SolveOptions check;
  check.weyl_tolerance = count_tolerance;
  try {
    detail::check_completeness(shape, window, check);
  } catch (const MissingLevels& e) {
    throw IncompleteWindow(std::string("unfold: ") + e.what());
  }
  std::vector<double> ks;
  ks.reserve(window.levels.size());
  for (const auto& l : window.levels) ks.push_back(l.k);
  UnfoldedSpectrum out = unfold_levels(ks, shape);
  out.k_lo = window.k_lo;
  out.k_hi = window.k_hi;
  return out;
}

double poisson_P(double s) {
  require_spacing(s);
  return std::exp(-s);
}

double poisson_E(double s) {
  require_spacing(s);
  return std::exp(-s);
}

double wigner_P(double s) {
  require_spacing(s);
  return 0.5 * std::numbers::pi * s * std::exp(-0.25 * std::numbers::pi * s * s);
}

double wigner_E(double s) {
  require_spacing(s);
  return std::erfc(0.5 * std::sqrt(std::numbers::pi) * s);
}

double BrodyModel::gamma() const { return std::tgamma((beta + 2.0) / (beta + 1.0)); }
double BrodyModel::d() const { return std::pow(gamma(), beta + 1.0); }
double BrodyModel::c() const { return (beta + 1.0) * d(); }

double brody_P(double s, double beta) {
  require_spacing(s);
  require_unit(beta, "brody beta");
  const BrodyModel m{beta};
  const double d = m.d();
  return (beta + 1.0) * d * std::pow(s, beta) * std::exp(-d * std::pow(s, beta + 1.0));
}

double brody_E(double s, double beta) {
  require_spacing(s);
  require_unit(beta, "brody beta");
  // Γ(1/(β+1)) = (β+1)γ, so the prefactor turns Q into its regularized form.
  return regularized_gamma_q(1.0 / (beta + 1.0), BrodyModel{beta}.d() * std::pow(s, beta + 1.0));
}

double brody_cdf(double s, double beta) {
  require_spacing(s);
  require_unit(beta, "brody beta");
  return -std::expm1(-BrodyModel{beta}.d() * std::pow(s, beta + 1.0));
}

double brb_E(double s, double rho1, double beta) {
  require_unit(rho1, "rho1");
  return std::exp(-rho1 * s) * brody_E((1.0 - rho1) * s, beta);
}

double brb_P(double s, double rho1, double beta) {
  require_spacing(s);
  require_unit(rho1, "rho1");
  require_unit(beta, "brody beta");
  const double rho2 = 1.0 - rho1;
  const double x = rho2 * s;
  const double d = BrodyModel{beta}.d();
  const double tail = std::exp(-d * std::pow(x, beta + 1.0));
  return std::exp(-rho1 * s) *
         (rho1 * rho1 * brody_E(x, beta) + 2.0 * rho1 * rho2 * tail + rho2 * rho2 * brody_P(x, beta));
}

double brb_cdf(double s, double rho1, double beta) {
  require_spacing(s);
  require_unit(rho1, "rho1");
  require_unit(beta, "brody beta");
  const double rho2 = 1.0 - rho1;
  const double x = rho2 * s;
  const double tail = std::exp(-BrodyModel{beta}.d() * std::pow(x, beta + 1.0));
  return 1.0 - std::exp(-rho1 * s) * (rho1 * brody_E(x, beta) + rho2 * tail);
}

double berry_robnik_P(double s, double rho1) { return brb_P(s, rho1, 1.0); }
double berry_robnik_E(double s, double rho1) { return brb_E(s, rho1, 1.0); }

BrodyFit fit_brody(std::span<const double> spacings) {
  if (spacings.size() < kMinSpacings) {
    throw InsufficientData("fit_brody: need at least " + std::to_string(kMinSpacings) + " spacings");
  }
  CompensatedSum<double> log_sum;
  for (double s : spacings) {
    require_spacing(s);
    log_sum += safe_log(s);
  }
  auto negative_ll = [&](double beta) {
    const BrodyModel m{beta};
    const double d = m.d();
    CompensatedSum<double> power_sum;
    for (double s : spacings) power_sum += std::pow(s, beta + 1.0);
    const double n = static_cast<double>(spacings.size());
    return -(n * std::log((beta + 1.0) * d) + beta * log_sum.value() - d * power_sum.value());
  };
  const MinimizeResult best = brent_minimize(negative_ll, 0.0, 1.0, 1e-10);
  if (!best.converged) {
    const double h = 1e-6;
    const double g = (negative_ll(std::min(1.0, best.x + h)) - negative_ll(std::max(0.0, best.x - h))) / (2.0 * h);
    throw OptimizerNotConverged("fit_brody: Brent search did not converge", best.value, std::abs(g));
  }
  BrodyFit fit;
  fit.model.beta = best.x;
  const std::vector<double> sorted = sorted_copy(spacings);
  fit.report = make_report(sorted, -best.value, [&](double s) { return brody_cdf(s, best.x); });
  return fit;
}

BRBFit fit_brb(std::span<const double> spacings, std::optional<double> rho1) {
  if (spacings.size() < kMinSpacings) {
    throw InsufficientData("fit_brb: need at least " + std::to_string(kMinSpacings) + " spacings");
  }
  for (double s : spacings) require_spacing(s);
  if (rho1) require_unit(*rho1, "rho1");

  auto best_beta = [&](double r1) {
    return brent_minimize([&](double beta) { return -brb_log_likelihood(spacings, r1, beta); }, 0.0, 1.0, 1e-8);
  };

  BRBFit fit;
  fit.rho1_fixed = rho1.has_value();
  MinimizeResult inner;
  if (rho1) {
    inner = best_beta(*rho1);
    fit.model = {*rho1, inner.x};
  } else {
    // Coarse grid to locate the basin, then a profile-likelihood Brent search in ρ₁.
    constexpr int grid = 21;
    double best_value = std::numeric_limits<double>::infinity();
    int best_i = 0;
    for (int i = 0; i < grid; ++i) {
      for (int j = 0; j < grid; ++j) {
        const double value = -brb_log_likelihood(spacings, i / (grid - 1.0), j / (grid - 1.0));
        if (value < best_value) {
          best_value = value;
          best_i = i;
        }
      }
    }
    const double lo = std::max(0.0, (best_i - 1) / (grid - 1.0));
    const double hi = std::min(1.0, (best_i + 1) / (grid - 1.0));
    const MinimizeResult outer =
        brent_minimize([&](double r1) { return best_beta(r1).value; }, lo, hi, 1e-7);
    inner = best_beta(outer.x);
    if (!outer.converged) {
      const double h = 1e-5;
      const double g = (best_beta(std::min(1.0, outer.x + h)).value - best_beta(std::max(0.0, outer.x - h)).value) /
                       (2.0 * h);
      throw OptimizerNotConverged("fit_brb: profile search over rho1 did not converge", outer.value, std::abs(g));
    }
    fit.model = {outer.x, inner.x};
  }
  if (!inner.converged) {
    throw OptimizerNotConverged("fit_brb: Brent search over beta did not converge", inner.value, 0.0);
  }
  const std::vector<double> sorted = sorted_copy(spacings);
  const BRBModel m = fit.model;
  fit.report = make_report(sorted, -inner.value, [&](double s) { return brb_cdf(s, m.rho1, m.beta); });
  return fit;
}

double BetaDistModel::log_norm() const {
  const double log_beta = std::lgamma(a + 1.0) + std::lgamma(b + 1.0) - std::lgamma(a + b + 2.0);
  return -((a + b + 1.0) * std::log(a0) + log_beta);
}

double BetaDistModel::density(double x) const {
  if (x <= 0.0 || x >= a0) {
    if (x == 0.0 && a == 0.0) return std::exp(log_norm() + b * std::log(a0));
    if (x == a0 && b == 0.0) return std::exp(log_norm() + a * std::log(a0));
    return 0.0;
  }
  return std::exp(log_norm() + a * std::log(x) + b * std::log(a0 - x));
}

double BetaDistModel::cdf(double x) const {
  if (x <= 0.0) return 0.0;
  if (x >= a0) return 1.0;
  return regularized_beta(a + 1.0, b + 1.0, x / a0);
}

BetaMoments beta_dist_moments(const BetaDistModel& model) {
  if (!(model.a > -1.0 && model.b > -1.0 && model.a0 > 0.0)) {
    throw ParameterOutOfRange("beta distribution needs a > -1, b > -1, A0 > 0");
  }
  BetaMoments m;
  const auto moment = [&](int power) {
    return integrate([&](double x) { return std::pow(x, power) * model.density(x); }, 0.0, model.a0, 1e-15, 1e-14,
                     20000)
        .value;
  };
  const double norm = moment(0);
  m.mean = moment(1) / norm;
  m.second_moment = moment(2) / norm;
  m.sigma = std::sqrt(std::max(0.0, m.second_moment - m.mean * m.mean));

  const double a = model.a, b = model.b, a0 = model.a0;
  m.closed_mean = a0 * (a + 1.0) / (a + b + 2.0);
  m.closed_second_moment = a0 * a0 * (a + 1.0) * (a + 2.0) / ((a + b + 2.0) * (a + b + 3.0));
  m.closed_sigma = a0 * std::sqrt((a + 1.0) * (b + 1.0) / ((a + b + 3.0) * (a + b + 2.0) * (a + b + 2.0)));

  m.shifted_mean = a0 * (a + 1.0) / (a + b + 3.0);
  m.shifted_second_moment = a0 * a0 * (a + 2.0) * (a + 1.0) / ((a + b + 4.0) * (a + b + 3.0));
  m.shifted_sigma = a0 * std::sqrt((a + 2.0) * (b + 2.0) / ((a + b + 4.0) * (a + b + 3.0) * (a + b + 3.0)));
  const auto differs = [](double x, double y) { return std::abs(x - y) > 1e-10 * std::max(1.0, std::abs(y)); };
  m.shifted_forms_disagree = differs(m.shifted_mean, m.mean) || differs(m.shifted_second_moment, m.second_moment);
  return m;
}

BetaFit fit_beta_dist(std::span<const double> samples, double a0, UpperLimit limit) {
  if (samples.size() < kMinBetaSamples) {
    throw InsufficientData("fit_beta_dist: need at least " + std::to_string(kMinBetaSamples) + " samples");
  }
  const auto [lo_it, hi_it] = std::minmax_element(samples.begin(), samples.end());
  if (limit == UpperLimit::max_sample) a0 = *hi_it + (*hi_it - *lo_it) / static_cast<double>(samples.size());
  if (!(a0 > 0.0)) throw ParameterOutOfRange("fit_beta_dist: A0 must be positive");
  if (!(*lo_it > 0.0) || !(*hi_it < a0)) {
    throw SampleOutOfRange("fit_beta_dist: samples span [" + std::to_string(*lo_it) + ", " + std::to_string(*hi_it) +
                           "], outside (0, A0 = " + std::to_string(a0) + ")");
  }
  const double n = static_cast<double>(samples.size());
  CompensatedSum<double> log_x, log_rest;
  for (double x : samples) {
    log_x += std::log(x);
    log_rest += std::log(a0 - x);
  }
  // Parameters enter as log(a + 1), log(b + 1) so the simplex stays in range.
  auto negative_ll = [&](const Eigen::VectorXd& v) {
    const BetaDistModel m{std::expm1(v(0)), std::expm1(v(1)), a0};
    return -(n * m.log_norm() + m.a * log_x.value() + m.b * log_rest.value());
  };
  // Method-of-moments start.
  const double mean_t = mean(samples) / a0;
  double var_t = 0.0;
  for (double x : samples) var_t += (x / a0 - mean_t) * (x / a0 - mean_t);
  var_t /= n;
  const double common = std::max(mean_t * (1.0 - mean_t) / var_t - 1.0, 0.5);
  Eigen::Vector2d start(std::log(std::max(mean_t * common, 0.05)), std::log(std::max((1.0 - mean_t) * common, 0.05)));
  const SimplexResult best = nelder_mead(negative_ll, start, Eigen::Vector2d(0.2, 0.2), 1e-13, 20000);
  const double grad = gradient_norm(negative_ll, best.x, 1e-6);
  if (!best.converged || grad > 1e-3 * std::max(1.0, std::abs(best.value))) {
    throw OptimizerNotConverged("fit_beta_dist: simplex search did not converge", best.value, grad);
  }
  BetaFit fit;
  fit.model = {std::expm1(best.x(0)), std::expm1(best.x(1)), a0};
  fit.moments = beta_dist_moments(fit.model);
  const std::vector<double> sorted = sorted_copy(samples);
  const BetaDistModel m = fit.model;
  fit.report = make_report(sorted, -best.value, [&](double x) { return m.cdf(x); });
  return fit;
}

RationalFit fit_rational(std::span<const RationalPoint> points) {
  if (points.size() < 5) throw InsufficientData("fit_rational: need at least 5 points");
  for (const auto& p : points) {
    if (!(p.alpha > 0.0)) throw DomainError("fit_rational: alpha must be positive");
  }
  // For fixed s the best asymptote is a linear least-squares solution.
  auto profile = [&](double s, double& asymptote) {
    double fy = 0.0, ff = 0.0;
    for (const auto& p : points) {
      const double f = s * p.alpha / (1.0 + s * p.alpha);
      fy += f * p.y;
      ff += f * f;
    }
    asymptote = std::clamp(fy / ff, 0.0, 1.1);
    double rss = 0.0;
    for (const auto& p : points) {
      const double r = p.y - asymptote * s * p.alpha / (1.0 + s * p.alpha);
      rss += r * r;
    }
    return rss;
  };
  constexpr double log_lo = -12.0, log_hi = 12.0;
  // Scan first: the profile can have a shallow secondary basin.
  int best_i = 0;
  double best_rss = std::numeric_limits<double>::infinity();
  constexpr int scan = 97;
  for (int i = 0; i < scan; ++i) {
    double y_inf;
    const double rss = profile(std::exp(log_lo + (log_hi - log_lo) * i / (scan - 1.0)), y_inf);
    if (rss < best_rss) {
      best_rss = rss;
      best_i = i;
    }
  }
  const double step = (log_hi - log_lo) / (scan - 1.0);
  const double a = log_lo + step * std::max(0, best_i - 1);
  const double b = log_lo + step * std::min(scan - 1, best_i + 1);
  const MinimizeResult best = brent_minimize(
      [&](double t) {
        double y_inf;
        return profile(std::exp(t), y_inf);
      },
      a, b, 1e-12);
  if (best.x - log_lo < 1e-3 || log_hi - best.x < 1e-3) {
    throw DegenerateFit("fit_rational: rate parameter runs to the edge of its range; points do not bracket saturation");
  }
  RationalFit fit;
  fit.s = std::exp(best.x);
  fit.residual_sum_squares = profile(fit.s, fit.asymptote);
  return fit;
}

}  // namespace lbill
