#ifndef LBILL_QUANTUM_HPP
#define LBILL_QUANTUM_HPP

// Even-parity Dirichlet eigenstates of the billiard: eigen-wavenumbers and
// boundary functions u(s) = ∂ψ/∂n (outward normal), the circle reference
// spectrum, and the smooth level count.

#include "lbill/errors.hpp"
#include "lbill/geometry.hpp"

#include <Eigen/Core>

#include <span>
#include <vector>

namespace lbill {

enum class Parity { even };

/// One eigenstate. u is sampled at s_i = (i + 1/2) L / N_b, i = 0..N_b-1, over
/// the whole boundary, normalized so that ∮ (r·n) u² ds = 2k².
struct EigenstateRecord {
  double k = 0.0;
  std::vector<double> u_samples;
  Parity parity = Parity::even;
  double lambda = 0.0;
  double perimeter = 0.0;
  double tension = 0.0;  // boundary residual ‖ψ‖/‖u/k‖ on the boundary

  int boundary_grid_size() const noexcept { return static_cast<int>(u_samples.size()); }
  double sample_arclength(int i) const noexcept { return (i + 0.5) * perimeter / boundary_grid_size(); }
};

struct SpectralWindow {
  double k_lo = 0.0;
  double k_hi = 0.0;
  double lambda = 0.0;
  std::vector<EigenstateRecord> levels;  // increasing k
};

enum class SolverMethod { scaling, boundary_integral };

struct SolveOptions {
  SolverMethod method = SolverMethod::scaling;
  double samples_per_wavelength = 6.0;  // boundary-function grid density
  // scaling method
  double sweep_step = 0.0;        // k₀ spacing; 0 picks 0.08 / max radius
  double extra_orders = 0.0;      // basis orders beyond k·R; 0 picks from the convergence radius
  double basis_tolerance = 1e-14; // tail decay target for the basis size
  double basis_scale = 1.0;       // multiplies the basis size, for convergence checks
  int max_basis = 2000;
  double points_per_order = 2.5;  // half-boundary quadrature nodes per basis function
  double rank_cutoff = 1e-14;     // relative eigenvalue floor of the boundary norm matrix
  double max_tension = 1e-3;      // larger boundary residuals are rejected as spurious
  // boundary integral method
  double bim_points_per_wavelength = 12.0;
  double bim_scan_step = 0.0;     // 0 picks a tenth of the mean spacing
  double bim_max_singular = 0.05;
  // completeness
  bool check_weyl = true;
  double weyl_tolerance = 0.0;    // 0 picks max(3, 2% of the expected count)
  int threads = 1;
};

/// All even eigenvalues in [k_lo, k_hi] with boundary functions.
SpectralWindow solve_window(const BilliardShape& shape, double k_lo, double k_hi, const SolveOptions& options = {});

/// Center of the Fourier-Bessel expansion and of the dilation, on the symmetry axis.
double expansion_center(const BilliardShape& shape);

struct CircleLevel {
  int n = 0;
  int m = 0;
  double k = 0.0;
};

/// Zeros j_{n,m} <= k_max of J_n, n >= 0, sorted by value.
std::vector<CircleLevel> circle_oracle(double k_max);

/// Analytic constant of the even-class count: curvature 1/12 plus two
/// Dirichlet-Neumann right-angle corners at -1/16 each.
double weyl_constant_even();

/// Smooth even-class count A k²/(8π) - (L/2 - ℓ) k/(4π) + C, ℓ the symmetry chord.
double weyl_count(const BilliardShape& shape, double k, double constant);
double weyl_count(const BilliardShape& shape, double k);

/// Derivative of weyl_count with respect to k.
double weyl_density(const BilliardShape& shape, double k);

/// Least-squares constant making the staircase residual of `levels` zero-mean.
double fit_weyl_constant(const BilliardShape& shape, std::span<const double> levels);

/// Interior wavefunction from the boundary function by the single-layer
/// representation ψ(r) = -¼ ∮ Y₀(k|r - r(s)|) u(s) ds. Caches boundary nodes.
class WavefunctionEvaluator {
 public:
  WavefunctionEvaluator(const EigenstateRecord& record, const BilliardShape& shape);
  double operator()(const Vec2<double>& point) const;

 private:
  double interpolate(double s) const;

  const BilliardShape& shape_;
  double k_;
  double h_;
  std::vector<Vec2<double>> nodes_;
  std::vector<double> u_;
  std::vector<double> cos_coeff_;
  std::vector<double> sin_coeff_;
};

double wavefunction_at(const EigenstateRecord& record, const BilliardShape& shape, const Vec2<double>& point);

}  // namespace lbill

#endif  // LBILL_QUANTUM_HPP
