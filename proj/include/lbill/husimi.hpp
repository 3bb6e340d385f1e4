#ifndef LBILL_HUSIMI_HPP
#define LBILL_HUSIMI_HPP

// Poincaré-Husimi densities of boundary functions, the localization measures
// built on them, and the regular/chaotic split through the chaotic grid.

#include "lbill/classical.hpp"
#include "lbill/quantum.hpp"

#include <Eigen/Core>

#include <complex>
#include <span>
#include <vector>

namespace lbill {

/// Density on cell centers q_i = (i + 1/2) L / N_q, p_j = -1 + (j + 1/2) 2 / N_p.
/// Rows index q, storage is row-major like ChaoticGrid.
struct HusimiGrid {
  using Values = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Values values;
  double k = 0.0;
  double lambda = 0.0;
  bool normalized = false;

  GridDims dims() const { return {static_cast<int>(values.rows()), static_cast<int>(values.cols())}; }
  std::size_t cells() const { return static_cast<std::size_t>(values.size()); }
};

/// Images |m| <= 2 of the periodized coherent state are kept, and terms with
/// k x²/2 > 40 are dropped.
inline constexpr int kCoherentImages = 2;
inline constexpr double kGaussianCutoff = 40.0;

/// ∫ c_{(q,p),k}(s) u(s) ds with the L-periodized Gaussian coherent state
/// c(s) = Σ_m exp(i k p (s - q + mL)) exp(-k (s - q + mL)² / 2).
std::complex<double> coherent_overlap(const EigenstateRecord& record, double q, double p);

/// |overlap|² on the grid, normalized to unit sum.
HusimiGrid husimi_grid(const EigenstateRecord& record, GridDims dims = {}, int threads = 1);

/// A = exp(-Σ H ln H) / N.
double entropy_A(const HusimiGrid& h);

/// 1 / (N Σ H²).
double nipr(const HusimiGrid& h);

/// M = Σ H K.
double overlap_index(const HusimiGrid& h, const ChaoticGrid& k);

enum class StateClass { regular, chaotic };

StateClass classify(double m, double m_t = 0.5);

/// Threshold that labels exactly round(ρ₁ n) of the given overlap indices regular,
/// placed halfway between neighbouring sorted values.
double classical_threshold(std::span<const double> m_values, double rho1);

struct LocalizationRecord {
  double k = 0.0;
  double a = 0.0;
  double a_normalized = 0.0;  // A / χ_C
  double nipr = 0.0;
  double m = 0.0;
  StateClass classification = StateClass::regular;
};

LocalizationRecord localize(const HusimiGrid& h, const ChaoticGrid& k, double m_t = 0.5);

struct MeasurePair {
  double a = 0.0;
  double nipr = 0.0;
};

/// Means of A and nIPR over consecutive groups of `group` chaotic records;
/// a trailing incomplete group is dropped.
std::vector<MeasurePair> window_averages(std::span<const LocalizationRecord> records, std::size_t group = 100);

}  // namespace lbill

#endif  // LBILL_HUSIMI_HPP
