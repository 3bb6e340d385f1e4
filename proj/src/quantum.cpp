#include "lbill/quantum.hpp"

#include "lbill/bessel.hpp"
#include "quantum_detail.hpp"

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <complex>

namespace lbill {

namespace detail {

namespace {

BoundaryNode node_at(const BilliardShape& shape, double theta, double weight) {
  const Vec2<double> p = shape.position(theta);
  const Vec2<double> d = shape.derivative(theta);
  const double speed = d.norm();
  return {p.x(), p.y(), d.y() / speed, -d.x() / speed, weight};
}

}  // namespace

std::vector<BoundaryNode> arclength_grid(const BilliardShape& shape, int n) {
  std::vector<BoundaryNode> nodes(n);
  const double ds = shape.perimeter() / n;
  for (int i = 0; i < n; ++i) nodes[i] = node_at(shape, shape.theta_at((i + 0.5) * ds), ds);
  return nodes;
}

std::vector<BoundaryNode> half_theta_grid(const BilliardShape& shape, int n) {
  std::vector<BoundaryNode> nodes(n);
  const double dtheta = std::numbers::pi / n;
  for (int i = 0; i < n; ++i) {
    const double theta = (i + 0.5) * dtheta;
    nodes[i] = node_at(shape, theta, 2.0 * shape.speed(theta) * dtheta);
  }
  return nodes;
}

int boundary_grid_size(const BilliardShape& shape, double k, double samples_per_wavelength) {
  return std::max(16, static_cast<int>(std::ceil(samples_per_wavelength * k * shape.perimeter() / (2.0 * std::numbers::pi))));
}

void normalize_boundary_function(const std::vector<BoundaryNode>& grid, double k, std::vector<double>& u) {
  CompensatedSum<double> norm;
  std::size_t peak = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto& g = grid[i];
    norm += g.weight * (g.x * g.nx + g.y * g.ny) * u[i] * u[i];
    if (std::abs(u[i]) > std::abs(u[peak])) peak = i;
  }
  if (!(norm.value() > 0.0)) throw NumericalError("boundary function has zero norm");
  double scale = std::sqrt(2.0 * k * k / norm.value());
  if (u[peak] < 0.0) scale = -scale;
  for (double& v : u) v *= scale;
}

double boundary_overlap(const std::vector<double>& a, const std::vector<double>& b) {
  const Eigen::Map<const Eigen::VectorXd> va(a.data(), static_cast<Eigen::Index>(a.size()));
  const Eigen::Map<const Eigen::VectorXd> vb(b.data(), static_cast<Eigen::Index>(b.size()));
  return std::abs(va.dot(vb)) / (va.norm() * vb.norm());
}

void check_completeness(const BilliardShape& shape, const SpectralWindow& window, const SolveOptions& options) {
  if (!options.check_weyl) return;
  const double expected = weyl_count(shape, window.k_hi) - weyl_count(shape, window.k_lo);
  const double tolerance = options.weyl_tolerance > 0.0 ? options.weyl_tolerance : std::max(3.0, 0.02 * expected);
  const double found = static_cast<double>(window.levels.size());
  if (std::abs(found - expected) > tolerance) {
    throw MissingLevels("window [" + std::to_string(window.k_lo) + ", " + std::to_string(window.k_hi) + "]: found " +
                        std::to_string(window.levels.size()) + " levels, smooth count expects " +
                        std::to_string(expected));
  }
}

}  // namespace detail

namespace {

using detail::BoundaryNode;

struct Expansion {
  double center = 0.0;
  double max_radius = 1.0;
  double convergence_radius = std::numeric_limits<double>::infinity();
};

// Continuations of the eigenfunctions are singular at the critical value of
// the map, w = -1/(4λ). The expansion disk about the center must reach past
// the boundary but not that point, so pick the center minimizing the ratio of
// the two radii among centers the domain is star-shaped about.
Expansion expansion_geometry(const BilliardShape& shape) {
  const double lambda = shape.lambda();
  constexpr int samples = 2048;
  auto radii = [&](double c, double& max_radius, double& min_support) {
    max_radius = 0.0;
    min_support = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= samples / 2; ++i) {
      const double theta = std::numbers::pi * i / (samples / 2);
      const Vec2<double> p = shape.position(theta);
      const Vec2<double> d = shape.derivative(theta);
      const double dx = p.x() - c, dy = p.y();
      max_radius = std::max(max_radius, std::hypot(dx, dy));
      min_support = std::min(min_support, (dx * d.y() - dy * d.x()) / d.norm());
    }
  };
  Expansion best;
  double max_radius, support;
  if (lambda == 0.0) {
    radii(0.0, max_radius, support);
    best.max_radius = max_radius;
    return best;
  }
  const double singular = -1.0 / (4.0 * lambda);
  double best_ratio = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 200; ++i) {
    const double c = -0.2 + 0.8 * i / 200.0;
    radii(c, max_radius, support);
    if (support < 0.05) continue;
    const double ratio = max_radius / (c - singular);
    if (ratio < best_ratio) {
      best_ratio = ratio;
      best = {c, max_radius, c - singular};
    }
  }
  if (!std::isfinite(best_ratio)) throw IllConditioned("no admissible expansion center");
  return best;
}

int basis_size(double k, const Expansion& geo, const SolveOptions& options) {
  const double kr = k * geo.max_radius;
  double extra = options.extra_orders;
  if (extra <= 0.0) {
    // Past k·R the orders decay like (R/R_conv)^n, and at least
    // super-exponentially like an evanescent Bessel tail.
    extra = 12.0 + 3.0 * std::cbrt(kr);
    if (std::isfinite(geo.convergence_radius)) {
      const double decay = std::log(geo.convergence_radius / geo.max_radius);
      extra = std::max(extra, std::min(std::log(1.0 / options.basis_tolerance) / decay,
                                       k * (geo.convergence_radius - geo.max_radius) + 40.0));
    }
  }
  return static_cast<int>(std::ceil(options.basis_scale * (kr + extra)));
}

// J_n(kρ) cos nφ about (center, 0) for n < orders, plus optionally its
// k-derivative ρ J_n'(kρ) cos nφ and its outward normal derivative.
void evaluate_basis(const std::vector<BoundaryNode>& nodes, double k, double center, int orders, Eigen::MatrixXd* value,
                    Eigen::MatrixXd* dk, Eigen::MatrixXd* normal) {
  const auto rows = static_cast<Eigen::Index>(nodes.size());
  if (value) value->resize(rows, orders);
  if (dk) dk->resize(rows, orders);
  if (normal) normal->resize(rows, orders);
  std::vector<double> j(orders + 1);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const BoundaryNode& nd = nodes[i];
    const double dx = nd.x - center, dy = nd.y;
    const double rho = std::hypot(dx, dy);
    const double cos1 = dx / rho, sin1 = dy / rho;
    const double radial_n = cos1 * nd.nx + sin1 * nd.ny;
    const double angular_n = -sin1 * nd.nx + cos1 * nd.ny;
    bessel_j_sequence(k * rho, j);
    double cn = 1.0, sn = 0.0;
    for (int n = 0; n < orders; ++n) {
      const double jn = j[n];
      const double djn = n == 0 ? -j[1] : 0.5 * (j[n - 1] - j[n + 1]);
      if (value) (*value)(i, n) = jn * cn;
      if (dk) (*dk)(i, n) = rho * djn * cn;
      if (normal) (*normal)(i, n) = k * djn * cn * radial_n - n / rho * jn * sn * angular_n;
      const double next = cn * cos1 - sn * sin1;
      sn = sn * cos1 + cn * sin1;
      cn = next;
    }
  }
}

struct Candidate {
  double k = 0.0;
  double offset = 0.0;  // |k - k₀|
  EigenstateRecord record;
};

class ScalingSolver {
 public:
  ScalingSolver(const BilliardShape& shape, double k_top, const SolveOptions& options)
      : shape_(shape), options_(options), geo_(expansion_geometry(shape)) {
    orders_ = basis_size(k_top, geo_, options);
    if (orders_ > options.max_basis) {
      throw IllConditioned("basis of " + std::to_string(orders_) + " functions exceeds the cap of " +
                           std::to_string(options.max_basis));
    }
    const int m = static_cast<int>(std::ceil(options.points_per_order * orders_));
    nodes_ = detail::half_theta_grid(shape, m);
    weights_.resize(m);
    for (int i = 0; i < m; ++i) {
      const BoundaryNode& nd = nodes_[i];
      weights_(i) = nd.weight / ((nd.x - geo_.center) * nd.nx + nd.y * nd.ny);
    }
  }

  double default_step() const { return 0.08 / geo_.max_radius; }

  // Levels k = k₀ - 2/μ from one generalized eigenproblem, kept when |k - k₀| <= half_width.
  std::vector<Candidate> sweep_point(double k0, double half_width) const {
    Eigen::MatrixXd a, d;
    evaluate_basis(nodes_, k0, geo_.center, orders_, &a, &d, nullptr);
    const Eigen::MatrixXd wa = weights_.asDiagonal() * a;
    Eigen::MatrixXd f = a.transpose() * wa;
    Eigen::MatrixXd g = d.transpose() * wa;
    g += g.transpose().eval();

    const double f_max = f.diagonal().maxCoeff();
    Eigen::VectorXd scale(orders_);
    for (int n = 0; n < orders_; ++n) {
      scale(n) = f(n, n) > 1e-300 * f_max ? 1.0 / std::sqrt(f(n, n)) : 0.0;
    }
    f = scale.asDiagonal() * f * scale.asDiagonal();
    g = scale.asDiagonal() * g * scale.asDiagonal();

    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> f_eig(f);
    const Eigen::VectorXd& fv = f_eig.eigenvalues();
    const double floor = options_.rank_cutoff * fv(orders_ - 1);
    Eigen::Index keep = 0;
    while (keep < orders_ && fv(orders_ - 1 - keep) > floor) ++keep;
    if (keep < std::min<Eigen::Index>(orders_, static_cast<Eigen::Index>(0.5 * k0 * geo_.max_radius))) {
      throw IllConditioned("boundary norm matrix retains only " + std::to_string(keep) + " of " +
                           std::to_string(orders_) + " directions at k = " + std::to_string(k0));
    }
    const Eigen::MatrixXd p =
        f_eig.eigenvectors().rightCols(keep) * fv.tail(keep).cwiseSqrt().cwiseInverse().asDiagonal();
    const Eigen::MatrixXd reduced = p.transpose() * g * p;
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> g_eig(reduced);

    std::vector<Candidate> out;
    for (Eigen::Index i = 0; i < keep; ++i) {
      const double mu = g_eig.eigenvalues()(i);
      if (!(std::abs(mu) > 2.0 / half_width)) continue;
      const double k = k0 - 2.0 / mu;
      const Eigen::VectorXd coeffs = scale.cwiseProduct(p * g_eig.eigenvectors().col(i));
      Candidate c;
      c.k = k;
      c.offset = std::abs(k - k0);
      c.record = boundary_record(k, coeffs);
      if (c.record.tension <= options_.max_tension) out.push_back(std::move(c));
    }
    return out;
  }

 private:
  EigenstateRecord boundary_record(double k, const Eigen::VectorXd& coeffs) const {
    const int nb = detail::boundary_grid_size(shape_, k, options_.samples_per_wavelength);
    const std::vector<BoundaryNode> grid = detail::arclength_grid(shape_, nb);
    Eigen::MatrixXd value, normal;
    evaluate_basis(grid, k, geo_.center, orders_, &value, nullptr, &normal);
    const Eigen::VectorXd psi = value * coeffs;
    const Eigen::VectorXd du = normal * coeffs;
    EigenstateRecord record;
    record.k = k;
    record.lambda = shape_.lambda();
    record.perimeter = shape_.perimeter();
    record.tension = psi.norm() / (du.norm() / k);
    record.u_samples.assign(du.data(), du.data() + du.size());
    detail::normalize_boundary_function(grid, k, record.u_samples);
    return record;
  }

  const BilliardShape& shape_;
  SolveOptions options_;
  Expansion geo_;
  int orders_ = 0;
  std::vector<BoundaryNode> nodes_;
  Eigen::VectorXd weights_;
};

// Sorts candidates and drops repeats of one state found from neighbouring
// sweep points, keeping the estimate closest to its own k₀.
std::vector<EigenstateRecord> merge_candidates(std::vector<Candidate> all, double same_k) {
  std::sort(all.begin(), all.end(), [](const Candidate& a, const Candidate& b) { return a.k < b.k; });
  std::vector<Candidate> kept;
  for (auto& c : all) {
    bool duplicate = false;
    for (auto it = kept.rbegin(); it != kept.rend() && c.k - it->k < same_k; ++it) {
      if (it->record.u_samples.size() == c.record.u_samples.size() &&
          detail::boundary_overlap(it->record.u_samples, c.record.u_samples) > 0.9) {
        if (c.offset < it->offset) *it = std::move(c);
        duplicate = true;
        break;
      }
    }
    if (!duplicate) kept.push_back(std::move(c));
  }
  std::vector<EigenstateRecord> out;
  out.reserve(kept.size());
  for (auto& c : kept) out.push_back(std::move(c.record));
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.k < b.k; });
  return out;
}

}  // namespace

double expansion_center(const BilliardShape& shape) { return expansion_geometry(shape).center; }

SpectralWindow solve_window(const BilliardShape& shape, double k_lo, double k_hi, const SolveOptions& options) {
  if (!(k_lo >= 20.0)) throw DomainError("solve_window: k_lo must be >= 20");
  if (!(k_hi > k_lo)) throw DomainError("solve_window: need k_hi > k_lo");
  if (options.method == SolverMethod::boundary_integral) return detail::solve_window_bim(shape, k_lo, k_hi, options);

  const ScalingSolver solver(shape, k_hi + 1.0, options);
  const double target_step = options.sweep_step > 0.0 ? options.sweep_step : solver.default_step();
  const int steps = std::max(1, static_cast<int>(std::ceil((k_hi - k_lo) / target_step)));
  const double step = (k_hi - k_lo) / steps;
  const double half_width = 0.65 * step;

  std::vector<std::vector<Candidate>> per_step(steps);
  parallel_for(static_cast<std::size_t>(steps), options.threads, [&](std::size_t j) {
    per_step[j] = solver.sweep_point(k_lo + (j + 0.5) * step, half_width);
  });
  std::vector<Candidate> all;
  for (auto& v : per_step) {
    for (auto& c : v) {
      if (c.k >= k_lo && c.k <= k_hi) all.push_back(std::move(c));
    }
  }

  SpectralWindow window;
  window.k_lo = k_lo;
  window.k_hi = k_hi;
  window.lambda = shape.lambda();
  window.levels = merge_candidates(std::move(all), 0.02 / weyl_density(shape, 0.5 * (k_lo + k_hi)));
  detail::check_completeness(shape, window, options);
  return window;
}

std::vector<CircleLevel> circle_oracle(double k_max) {
  if (!(k_max > 0.0)) throw DomainError("circle_oracle: k_max must be positive");
  std::vector<CircleLevel> out;
  for (int n = 0; n < k_max; ++n) {
    const double order = n;
    auto j = [order](double x) { return std::cyl_bessel_j(order, x); };
    // Consecutive zeros are more than π apart, so a half-unit scan brackets each one.
    double lo = std::max(0.5, static_cast<double>(n));
    double f_lo = j(lo);
    int m = 0;
    while (lo < k_max) {
      const double hi = std::min(lo + 0.5, k_max);
      const double f_hi = j(hi);
      if (f_lo == 0.0 || (f_lo < 0.0) != (f_hi < 0.0)) {
        double a = lo, b = hi, fa = f_lo;
        for (int it = 0; it < 200 && b - a > 4e-16 * b; ++it) {
          const double mid = 0.5 * (a + b);
          const double fm = j(mid);
          if ((fm < 0.0) == (fa < 0.0)) {
            a = mid;
            fa = fm;
          } else {
            b = mid;
          }
        }
        out.push_back({n, ++m, 0.5 * (a + b)});
      }
      lo = hi;
      f_lo = f_hi;
    }
  }
  std::sort(out.begin(), out.end(), [](const CircleLevel& a, const CircleLevel& b) { return a.k < b.k; });
  return out;
}

double weyl_constant_even() { return 1.0 / 12.0 - 2.0 / 16.0; }

double weyl_count(const BilliardShape& shape, double k, double constant) {
  const double boundary = 0.5 * shape.perimeter() - shape.symmetry_line_length();
  return shape.area() * k * k / (8.0 * std::numbers::pi) - boundary * k / (4.0 * std::numbers::pi) + constant;
}

double weyl_count(const BilliardShape& shape, double k) { return weyl_count(shape, k, weyl_constant_even()); }

double weyl_density(const BilliardShape& shape, double k) {
  const double boundary = 0.5 * shape.perimeter() - shape.symmetry_line_length();
  return shape.area() * k / (4.0 * std::numbers::pi) - boundary / (4.0 * std::numbers::pi);
}

double fit_weyl_constant(const BilliardShape& shape, std::span<const double> levels) {
  if (levels.empty()) throw InsufficientData("fit_weyl_constant: no levels");
  CompensatedSum<double> sum;
  for (std::size_t i = 0; i < levels.size(); ++i) sum += (i + 0.5) - weyl_count(shape, levels[i], 0.0);
  return sum.value() / static_cast<double>(levels.size());
}

WavefunctionEvaluator::WavefunctionEvaluator(const EigenstateRecord& record, const BilliardShape& shape)
    : shape_(shape), k_(record.k), h_(shape.perimeter() / record.boundary_grid_size()), u_(record.u_samples) {
  if (record.u_samples.empty()) throw DomainError("wavefunction: empty boundary function");
  for (const auto& nd : detail::arclength_grid(shape, record.boundary_grid_size())) nodes_.emplace_back(nd.x, nd.y);
  // Trigonometric interpolant of samples taken at (i + 1/2) h.
  const int n = record.boundary_grid_size();
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spectrum;
  fft.fwd(spectrum, u_);
  const int half = n / 2;
  cos_coeff_.assign(half + 1, 0.0);
  sin_coeff_.assign(half + 1, 0.0);
  for (int m = 0; m <= half; ++m) {
    const std::complex<double> c = spectrum[m] * std::polar(1.0 / n, -std::numbers::pi * m / n);
    const double factor = (m == 0 || 2 * m == n) ? 1.0 : 2.0;
    cos_coeff_[m] = factor * c.real();
    sin_coeff_[m] = -factor * c.imag();
  }
}

double WavefunctionEvaluator::interpolate(double s) const {
  const double angle = 2.0 * std::numbers::pi * s / shape_.perimeter();
  const std::complex<double> step = std::polar(1.0, angle);
  std::complex<double> z = 1.0;
  double value = 0.0;
  for (std::size_t m = 0; m < cos_coeff_.size(); ++m) {
    value += cos_coeff_[m] * z.real() + sin_coeff_[m] * z.imag();
    z *= step;
  }
  return value;
}

namespace {

// Smooth cutoff: 1 on |t| <= 1/3, 0 for |t| >= 1, C∞ in between.
double window_weight(double t) {
  const double x = (std::abs(t) - 1.0 / 3.0) * 1.5;
  if (x <= 0.0) return 1.0;
  if (x >= 1.0) return 0.0;
  const double a = std::exp(-1.0 / x);
  const double b = std::exp(-1.0 / (1.0 - x));
  return b / (a + b);
}

}  // namespace

double WavefunctionEvaluator::operator()(const Vec2<double>& point) const {
  if (!contains(shape_, point)) throw PointOutsideDomain("wavefunction: point outside the billiard");
  const int n = static_cast<int>(nodes_.size());
  int nearest = 0;
  double nearest_distance = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    const double d = (nodes_[i] - point).norm();
    if (d < nearest_distance) {
      nearest_distance = d;
      nearest = i;
    }
  }
  // Near the boundary the kernel is nearly singular. Split it with a smooth
  // window around the closest node: the periodic midpoint rule stays
  // spectrally accurate on the remainder, and the windowed part is
  // integrated adaptively with the interpolated boundary function.
  const bool near = nearest_distance < 8.0 * h_;
  const double center = (nearest + 0.5) * h_;
  const double width = std::min(40.0 * h_, 0.25 * shape_.perimeter());
  const double length = shape_.perimeter();
  CompensatedSum<double> sum;
  for (int i = 0; i < n; ++i) {
    double weight = 1.0;
    if (near) weight -= window_weight(std::remainder((i + 0.5) * h_ - center, length) / width);
    if (weight == 0.0) continue;
    sum += weight * std::cyl_neumann(0.0, k_ * (nodes_[i] - point).norm()) * u_[i] * h_;
  }
  if (near) {
    auto integrand = [&](double s) {
      const Vec2<double> r = shape_.position(shape_.theta_at(s));
      return window_weight((s - center) / width) * std::cyl_neumann(0.0, k_ * (r - point).norm()) * interpolate(s);
    };
    sum += integrate(integrand, center - width, center, 1e-14, 1e-13).value;
    sum += integrate(integrand, center, center + width, 1e-14, 1e-13).value;
  }
  return -0.25 * sum.value();
}

double wavefunction_at(const EigenstateRecord& record, const BilliardShape& shape, const Vec2<double>& point) {
  return WavefunctionEvaluator(record, shape)(point);
}

}  // namespace lbill
