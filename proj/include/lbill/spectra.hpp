#ifndef LBILL_SPECTRA_HPP
#define LBILL_SPECTRA_HPP

// Unfolding, spacing and gap-probability models (Poisson, Wigner, Brody,
// Berry-Robnik, Berry-Robnik-Brody), their maximum-likelihood fits, the beta
// distribution of localization measures and the saturating rational fit.

#include "lbill/errors.hpp"
#include "lbill/quantum.hpp"

#include <optional>
#include <span>
#include <vector>

namespace lbill {

struct UnfoldedSpectrum {
  std::vector<double> unfolded_levels;
  std::vector<double> spacings;
  double lambda = 0.0;
  double k_lo = 0.0;
  double k_hi = 0.0;
};

/// x = N_smooth(k). Throws IncompleteWindow when the level count fails the
/// smooth-count check (same tolerance rule as solve_window).
UnfoldedSpectrum unfold(const SpectralWindow& window, const BilliardShape& shape, double count_tolerance = 0.0);

/// Unfolds plain wavenumbers without a completeness check.
UnfoldedSpectrum unfold_levels(std::span<const double> levels, const BilliardShape& shape);

double poisson_P(double s);
double poisson_E(double s);
double wigner_P(double s);
double wigner_E(double s);

/// P_B = c S^β exp(-d S^{β+1}) with d = Γ((β+2)/(β+1))^{β+1}, c = (β+1) d.
struct BrodyModel {
  double beta = 1.0;

  double gamma() const;
  double d() const;
  double c() const;
};

double brody_P(double s, double beta);
double brody_E(double s, double beta);
double brody_cdf(double s, double beta);

double berry_robnik_P(double s, double rho1);
double berry_robnik_E(double s, double rho1);

struct BRBModel {
  double rho1 = 0.0;
  double beta = 1.0;
  double rho2() const { return 1.0 - rho1; }
};

/// E = exp(-ρ₁S) E_B(ρ₂S; β).
double brb_E(double s, double rho1, double beta);
/// P = E'' = exp(-ρ₁S)[ρ₁² E_B(ρ₂S) + 2ρ₁ρ₂ exp(-d(ρ₂S)^{β+1}) + ρ₂² P_B(ρ₂S)].
double brb_P(double s, double rho1, double beta);
/// 1 + E'(S).
double brb_cdf(double s, double rho1, double beta);

struct FitReport {
  double log_likelihood = 0.0;
  double ks_statistic = 0.0;
  double ks_pvalue = 0.0;
  std::size_t sample_count = 0;
};

struct BrodyFit {
  BrodyModel model;
  FitReport report;
};

struct BRBFit {
  BRBModel model;
  bool rho1_fixed = false;
  FitReport report;
};

inline constexpr std::size_t kMinSpacings = 500;

BrodyFit fit_brody(std::span<const double> spacings);

/// Holds ρ₁ fixed when given, otherwise maximizes over (ρ₁, β) ∈ [0, 1]².
BRBFit fit_brb(std::span<const double> spacings, std::optional<double> rho1 = std::nullopt);

/// P(A) = C A^a (A0 - A)^b on [0, A0]; a, b > -1.
struct BetaDistModel {
  double a = 0.0;
  double b = 0.0;
  double a0 = 0.7;

  double log_norm() const;  // ln C
  double density(double x) const;
  double cdf(double x) const;
};

struct BetaMoments {
  double mean = 0.0;          // by quadrature
  double second_moment = 0.0; // by quadrature
  double sigma = 0.0;
  double closed_mean = 0.0;   // A0 (a+1)/(a+b+2)
  double closed_second_moment = 0.0;
  double closed_sigma = 0.0;
  // The forms with denominators a+b+3 and (a+b+4)(a+b+3), kept for comparison.
  double shifted_mean = 0.0;
  double shifted_second_moment = 0.0;
  double shifted_sigma = 0.0;
  bool shifted_forms_disagree = false;
};

BetaMoments beta_dist_moments(const BetaDistModel& model);

enum class UpperLimit { fixed, max_sample };

struct BetaFit {
  BetaDistModel model;
  BetaMoments moments;
  FitReport report;
};

inline constexpr std::size_t kMinBetaSamples = 200;

/// Maximum-likelihood (a, b) on [0, A0]. With UpperLimit::max_sample the
/// upper limit is the largest sample plus (max - min)/n.
BetaFit fit_beta_dist(std::span<const double> samples, double a0 = 0.7, UpperLimit limit = UpperLimit::fixed);

/// y = y∞ sα / (1 + sα).
struct RationalFit {
  double asymptote = 0.0;
  double s = 0.0;
  double residual_sum_squares = 0.0;

  double operator()(double alpha) const { return asymptote * s * alpha / (1.0 + s * alpha); }
};

struct RationalPoint {
  double alpha = 0.0;
  double y = 0.0;
};

RationalFit fit_rational(std::span<const RationalPoint> points);

}  // namespace lbill

#endif  // LBILL_SPECTRA_HPP
