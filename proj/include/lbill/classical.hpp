#ifndef LBILL_CLASSICAL_HPP
#define LBILL_CLASSICAL_HPP

// Bounce map in Poincaré-Birkhoff coordinates (s, p), momentum transport of
// an ensemble, and the chaotic-component indicator grid.

#include "lbill/errors.hpp"
#include "lbill/geometry.hpp"

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <span>
#include <vector>

namespace lbill {

/// Arclength s ∈ [0, L) and tangential momentum p = sin(reflection angle).
template <Real Scalar>
struct PhasePointT {
  Scalar s;
  Scalar p;
};
using PhasePoint = PhasePointT<double>;

/// Same state keyed by the boundary parameter θ; cheaper to iterate.
template <Real Scalar>
struct CollisionT {
  Scalar theta;
  Scalar p;
};
using Collision = CollisionT<double>;

/// Launches closer than this to tangency are rejected.
inline constexpr double kTangentialMargin = 1e-12;

namespace detail {

// g(φ) = cross(D, w(θ₀+φ) − w(θ₀)) / sin(φ/2), written with sum-to-product
// identities so it stays smooth at φ → 0 and φ → 2π. Its zeros in (0, 2π) are
// the other intersections of the ray with the boundary. Only sin/cos of φ/2
// are evaluated; everything else follows from rotations of e^{iθ₀}.
template <Real Scalar>
struct ChordFunction {
  Scalar cos0, sin0, lambda, dx, dy;

  void chord_over_sine(Scalar phi, Scalar& cx, Scalar& cy, Scalar& ch) const {
    const Scalar sh = std::sin(phi / Scalar(2));
    ch = std::cos(phi / Scalar(2));
    const Scalar ca = cos0 * ch - sin0 * sh;
    const Scalar sa = sin0 * ch + cos0 * sh;
    const Scalar cb = ca * ca - sa * sa;
    const Scalar sb = Scalar(2) * sa * ca;
    cx = -Scalar(2) * sa - Scalar(4) * lambda * sb * ch;
    cy = Scalar(2) * ca + Scalar(4) * lambda * cb * ch;
  }

  Scalar value(Scalar phi) const {
    Scalar cx, cy, ch;
    chord_over_sine(phi, cx, cy, ch);
    return dx * cy - dy * cx;
  }

  void value_and_derivative(Scalar phi, Scalar& g, Scalar& dg) const {
    const Scalar sh = std::sin(phi / Scalar(2));
    const Scalar ch = std::cos(phi / Scalar(2));
    const Scalar ca = cos0 * ch - sin0 * sh;
    const Scalar sa = sin0 * ch + cos0 * sh;
    const Scalar cb = ca * ca - sa * sa;
    const Scalar sb = Scalar(2) * sa * ca;
    const Scalar cx = -Scalar(2) * sa - Scalar(4) * lambda * sb * ch;
    const Scalar cy = Scalar(2) * ca + Scalar(4) * lambda * cb * ch;
    const Scalar dcx = -ca - Scalar(4) * lambda * (cb * ch - sb * sh / Scalar(2));
    const Scalar dcy = -sa + Scalar(4) * lambda * (-sb * ch - cb * sh / Scalar(2));
    g = dx * cy - dy * cx;
    dg = dx * dcy - dy * dcx;
  }

  /// Distance along the ray to the boundary point at θ₀ + φ.
  Scalar distance(Scalar phi) const {
    Scalar cx, cy, ch;
    chord_over_sine(phi, cx, cy, ch);
    return std::sin(phi / Scalar(2)) * (dx * cx + dy * cy);
  }

  ChordFunction negated() const { return {cos0, sin0, lambda, -dx, -dy}; }
};

// Safeguarded Newton inside a sign-change bracket [lo, hi] with g(lo) < 0 < g(hi).
// Stops once a Newton step falls below sqrt(eps)/100: convergence is
// quadratic there, so the returned iterate is accurate to working precision.
template <Real Scalar>
Scalar refine_root(const ChordFunction<Scalar>& g, Scalar lo, Scalar hi, Scalar guess) {
  Scalar x = (guess > lo && guess < hi) ? guess : Scalar(0.5) * (lo + hi);
  const Scalar newton_tol = std::sqrt(std::numeric_limits<Scalar>::epsilon()) / Scalar(100);
  const Scalar bracket_tol = Scalar(8) * std::numeric_limits<Scalar>::epsilon();
  for (int iter = 0; iter < 100; ++iter) {
    Scalar gx, dgx;
    g.value_and_derivative(x, gx, dgx);
    if (gx == Scalar(0)) return x;
    if (gx < Scalar(0)) lo = x; else hi = x;
    const Scalar dx = -gx / dgx;
    if (std::abs(dx) <= newton_tol) return x + dx;
    x = (x + dx > lo && x + dx < hi) ? x + dx : Scalar(0.5) * (lo + hi);
    if (hi - lo <= bracket_tol) return x;
  }
  return x;
}

}  // namespace detail

/// One bounce from the collision (θ, p): launch with tangential component p,
/// find the next boundary intersection and return its θ and the tangential
/// component of the velocity there.
template <Real Scalar>
CollisionT<Scalar> bounce(const BilliardShapeT<Scalar>& shape, CollisionT<Scalar> c) {
  constexpr Scalar two_pi = Scalar(2) * std::numbers::pi_v<Scalar>;
  if (!(std::abs(c.p) < Scalar(1) - Scalar(kTangentialMargin))) {
    throw TangentialLaunch("bounce: |p| too close to 1 (p = " + std::to_string(double(c.p)) + ")");
  }
  const Scalar lambda = shape.lambda();
  const Scalar cos0 = std::cos(c.theta), sin0 = std::sin(c.theta);
  // w'(θ₀) = i z (1 + 2λ z) with z = e^{iθ₀}.
  const Scalar cos2 = cos0 * cos0 - sin0 * sin0, sin2 = Scalar(2) * sin0 * cos0;
  Vec2<Scalar> t0(-sin0 - Scalar(2) * lambda * sin2, cos0 + Scalar(2) * lambda * cos2);
  t0 /= t0.norm();
  const Vec2<Scalar> n0(-t0.y(), t0.x());
  const Vec2<Scalar> dir = c.p * t0 + std::sqrt((Scalar(1) - c.p) * (Scalar(1) + c.p)) * n0;
  const detail::ChordFunction<Scalar> g{cos0, sin0, lambda, dir.x(), dir.y()};

  Scalar phi;
  if (lambda <= Scalar(0.25)) {
    // Convex: exactly one root in (0, 2π), g(0+) < 0 < g(2π-). Seed with the circle chord.
    const Scalar guess = std::numbers::pi_v<Scalar> - Scalar(2) * std::asin(c.p);
    phi = detail::refine_root(g, Scalar(0), two_pi, guess);
  } else {
    // Nonconvex: scan for every sign change and keep the nearest forward hit.
    constexpr int scan = 96;
    Scalar best_distance = std::numeric_limits<Scalar>::infinity();
    phi = Scalar(-1);
    Scalar prev_phi = Scalar(0);
    Scalar prev_g = g.value(Scalar(0));
    for (int i = 1; i <= scan; ++i) {
      const Scalar x = two_pi * Scalar(i) / Scalar(scan);
      const Scalar gx = g.value(x);
      if ((prev_g < Scalar(0)) != (gx < Scalar(0))) {
        Scalar root;
        if (prev_g < Scalar(0)) {
          root = detail::refine_root(g, prev_phi, x, Scalar(0.5) * (prev_phi + x));
        } else {
          // Decreasing crossing: refine -g, which has the required sign pattern.
          root = detail::refine_root(g.negated(), prev_phi, x, Scalar(0.5) * (prev_phi + x));
        }
        const Scalar dist = g.distance(root);
        if (dist > Scalar(0) && dist < best_distance) {
          best_distance = dist;
          phi = root;
        }
      }
      prev_phi = x;
      prev_g = gx;
    }
    if (phi < Scalar(0)) throw NoIntersection("bounce: no forward intersection found");
  }

  Scalar theta1 = std::fmod(c.theta + phi, two_pi);
  if (theta1 < Scalar(0)) theta1 += two_pi;
  // e^{iθ₁} = e^{iθ₀} e^{iφ}.
  const Scalar sh = std::sin(phi / Scalar(2)), ch = std::cos(phi / Scalar(2));
  const Scalar cphi = ch * ch - sh * sh, sphi = Scalar(2) * sh * ch;
  const Scalar cos1 = cos0 * cphi - sin0 * sphi, sin1 = sin0 * cphi + cos0 * sphi;
  const Vec2<Scalar> d1(-sin1 - Scalar(4) * lambda * sin1 * cos1,
                        cos1 + Scalar(2) * lambda * (cos1 * cos1 - sin1 * sin1));
  const Scalar p1 = dir.dot(d1) / d1.norm();
  return {theta1, p1};
}

/// Bounce in arclength coordinates.
template <Real Scalar>
PhasePointT<Scalar> bounce(const BilliardShapeT<Scalar>& shape, PhasePointT<Scalar> point) {
  const CollisionT<Scalar> next = bounce(shape, CollisionT<Scalar>{shape.theta_at(point.s), point.p});
  Scalar s = shape.arclength(next.theta);
  if (s >= shape.perimeter()) s -= shape.perimeter();
  return {s, next.p};
}

/// Time reversal (s, p) -> (s, -p).
template <Real Scalar>
PhasePointT<Scalar> time_reversed(PhasePointT<Scalar> point) {
  return {point.s, -point.p};
}

struct TransportResult {
  std::vector<double> second_moment_series;  // <p²> after n collisions, n = 0..max
  double asymptote = 0.0;
  std::map<double, int> n_t_by_criterion;    // fraction -> N_T
};

struct TransportOptions {
  double tail_fraction = 0.1;          // tail averaged for the asymptote
  double max_tail_relative_drift = 0.05;
  int threads = 1;
};

inline constexpr std::size_t kMinTransportEnsemble = 10000;

/// Ensemble uniform in s at p = 0; N_T(f) is the first collision count with
/// <p²> >= f * asymptote.
TransportResult transport_time(const BilliardShape& shape, std::size_t ensemble_size,
                               std::span<const double> fractions, int max_collisions, std::uint64_t seed,
                               const TransportOptions& options = {});

struct GridDims {
  int n_q = 400;
  int n_p = 400;
  friend bool operator==(const GridDims&, const GridDims&) = default;
};

/// Visited-cell indicator over (s, p) ∈ [0, L) × [-1, 1]: +1 chaotic, -1 regular.
/// Rows index s, columns index p; storage is row-major (s-major).
struct ChaoticGrid {
  using Cells = Eigen::Array<std::int8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Cells cells;
  double chi_c = 0.0;
  double lambda = 0.0;
  double perimeter = 0.0;
  std::uint64_t seed = 0;
  std::int64_t n_collisions = 0;
  PhasePoint start{0.0, 0.0};

  GridDims dims() const { return {static_cast<int>(cells.rows()), static_cast<int>(cells.cols())}; }
};

struct ChaoticGridOptions {
  PhasePoint preferred_start{0.0, 0.5};
  int lyapunov_steps = 3000;
  double lyapunov_threshold = 0.02;
  std::int64_t probe_collisions = 100000;
  double min_cell_fraction = 0.01;     // SeedInRegularRegion below this coverage
};

ChaoticGrid chaotic_grid(const BilliardShape& shape, std::int64_t n_collisions, GridDims dims, std::uint64_t seed,
                         const ChaoticGridOptions& options = {});

/// Finite-time Lyapunov estimate per collision from two nearby trajectories.
double lyapunov_estimate(const BilliardShape& shape, PhasePoint start, int steps);

/// α = 2k / N_T. The shape does not enter; it is taken so call sites name the billiard.
double alpha(const BilliardShape& shape, double k, int n_t);

}  // namespace lbill

#endif  // LBILL_CLASSICAL_HPP
