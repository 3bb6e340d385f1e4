#include "quantum_detail.hpp"

#include <Eigen/SVD>

#include <complex>

namespace lbill::detail {

namespace {

// Even-class double-layer operator I - Q on the upper-half nodes of a
// symmetric arclength grid, Q(t, s) = -(ik/2) H₁(kd) n_t·(r_t - r_s)/d ds.
class BoundaryIntegralOperator {
 public:
  BoundaryIntegralOperator(const BilliardShape& shape, int n_full) : grid_(arclength_grid(shape, n_full)) {
    curvature_.resize(n_full / 2);
    for (int i = 0; i < n_full / 2; ++i) curvature_[i] = shape.curvature(shape.theta_at((i + 0.5) * shape.perimeter() / n_full));
  }

  Eigen::MatrixXcd matrix(double k) const {
    const int n_full = static_cast<int>(grid_.size());
    const int n = n_full / 2;
    const double h = grid_[0].weight;
    Eigen::MatrixXcd m = Eigen::MatrixXcd::Identity(n, n);
    for (int t = 0; t < n; ++t) {
      const BoundaryNode& target = grid_[t];
      for (int s = 0; s < n_full; ++s) {
        const int column = s < n ? s : n_full - 1 - s;
        if (s == t) {
          m(t, column) -= -curvature_[t] * h / (2.0 * std::numbers::pi);
          continue;
        }
        const BoundaryNode& source = grid_[s];
        const double dx = target.x - source.x, dy = target.y - source.y;
        const double d = std::hypot(dx, dy);
        const double cosine = (target.nx * dx + target.ny * dy) / d;
        const std::complex<double> hankel(std::cyl_bessel_j(1.0, k * d), std::cyl_neumann(1.0, k * d));
        m(t, column) -= std::complex<double>(0.0, -0.5 * k) * hankel * cosine * h;
      }
    }
    return m;
  }

  double smallest_singular_value(double k) const {
    const Eigen::BDCSVD<Eigen::MatrixXcd> svd(matrix(k));
    return svd.singularValues().minCoeff();
  }

  std::vector<double> null_function(double k) const {
    const Eigen::BDCSVD<Eigen::MatrixXcd> svd(matrix(k), Eigen::ComputeThinV);
    Eigen::Index last = 0;
    svd.singularValues().minCoeff(&last);
    const Eigen::VectorXcd v = svd.matrixV().col(last);
    // Rotate the free phase so the vector is as real as possible.
    const std::complex<double> square = v.cwiseProduct(v).sum();
    const std::complex<double> phase = std::polar(1.0, -0.5 * std::arg(square));
    const int n = static_cast<int>(v.size());
    std::vector<double> u(2 * n);
    for (int i = 0; i < n; ++i) {
      u[i] = (phase * v(i)).real();
      u[2 * n - 1 - i] = u[i];
    }
    return u;
  }

  const std::vector<BoundaryNode>& grid() const { return grid_; }

 private:
  std::vector<BoundaryNode> grid_;
  std::vector<double> curvature_;
};

}  // namespace

SpectralWindow solve_window_bim(const BilliardShape& shape, double k_lo, double k_hi, const SolveOptions& options) {
  int n_full = boundary_grid_size(shape, k_hi, options.bim_points_per_wavelength);
  n_full += n_full % 2;
  const BoundaryIntegralOperator op(shape, n_full);

  const double spacing = 1.0 / weyl_density(shape, 0.5 * (k_lo + k_hi));
  const double target = options.bim_scan_step > 0.0 ? options.bim_scan_step : 0.1 * spacing;
  const int steps = std::max(2, static_cast<int>(std::ceil((k_hi - k_lo) / target)));
  const double step = (k_hi - k_lo) / steps;
  std::vector<double> ks(steps + 3), sigma(steps + 3);
  for (int i = 0; i < steps + 3; ++i) ks[i] = k_lo + (i - 1) * step;
  parallel_for(ks.size(), options.threads, [&](std::size_t i) { sigma[i] = op.smallest_singular_value(ks[i]); });

  SpectralWindow window;
  window.k_lo = k_lo;
  window.k_hi = k_hi;
  window.lambda = shape.lambda();
  for (std::size_t i = 1; i + 1 < ks.size(); ++i) {
    if (!(sigma[i] <= sigma[i - 1] && sigma[i] < sigma[i + 1])) continue;
    const MinimizeResult best = brent_minimize([&](double k) { return op.smallest_singular_value(k); }, ks[i - 1],
                                               ks[i + 1], 1e-11 * ks[i]);
    if (best.value > options.bim_max_singular || best.x < k_lo || best.x > k_hi) continue;
    EigenstateRecord record;
    record.k = best.x;
    record.lambda = shape.lambda();
    record.perimeter = shape.perimeter();
    record.tension = best.value;
    std::vector<double> u = op.null_function(best.x);
    const int nb = boundary_grid_size(shape, best.x, options.samples_per_wavelength);
    if (nb != n_full) {
      // Resample on the record's own grid by trigonometric interpolation.
      // Even in s, so only cosine terms appear.
      const int half = std::min(n_full, nb) / 2;
      std::vector<double> coeff(half + 1, 0.0);
      for (int m = 0; m <= half; ++m) {
        for (int i = 0; i < n_full; ++i) coeff[m] += u[i] * std::cos(m * 2.0 * std::numbers::pi * (i + 0.5) / n_full);
        coeff[m] *= ((m == 0 || 2 * m == n_full) ? 1.0 : 2.0) / n_full;
      }
      std::vector<double> resampled(nb, 0.0);
      for (int j = 0; j < nb; ++j) {
        const double x = 2.0 * std::numbers::pi * (j + 0.5) / nb;
        for (int m = 0; m <= half; ++m) resampled[j] += coeff[m] * std::cos(m * x);
      }
      u = std::move(resampled);
    }
    normalize_boundary_function(arclength_grid(shape, nb), best.x, u);
    record.u_samples = std::move(u);
    window.levels.push_back(std::move(record));
  }
  check_completeness(shape, window, options);
  return window;
}

}  // namespace lbill::detail
