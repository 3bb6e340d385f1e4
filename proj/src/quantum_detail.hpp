#ifndef LBILL_SRC_QUANTUM_DETAIL_HPP
#define LBILL_SRC_QUANTUM_DETAIL_HPP

#include "lbill/quantum.hpp"

#include <vector>

namespace lbill::detail {

struct BoundaryNode {
  double x, y;
  double nx, ny;  // outward unit normal
  double weight;  // ds
};

// Nodes at s_i = (i + 1/2) L / n over the whole boundary.
std::vector<BoundaryNode> arclength_grid(const BilliardShape& shape, int n);

// Midpoint nodes θ_i = (i + 1/2) π / n on the upper half; weights are doubled
// so that sums over them integrate even functions over the whole boundary.
std::vector<BoundaryNode> half_theta_grid(const BilliardShape& shape, int n);

int boundary_grid_size(const BilliardShape& shape, double k, double samples_per_wavelength);

// Rescales u to ∮ (r·n) u² ds = 2k² and makes its largest sample positive.
void normalize_boundary_function(const std::vector<BoundaryNode>& grid, double k, std::vector<double>& u);

// Absolute overlap of two boundary functions on the same grid, in [0, 1].
double boundary_overlap(const std::vector<double>& a, const std::vector<double>& b);

// Throws MissingLevels when the level count strays from the smooth count.
void check_completeness(const BilliardShape& shape, const SpectralWindow& window, const SolveOptions& options);

SpectralWindow solve_window_bim(const BilliardShape& shape, double k_lo, double k_hi, const SolveOptions& options);

}  // namespace lbill::detail

#endif  // LBILL_SRC_QUANTUM_DETAIL_HPP
